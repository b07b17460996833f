"""Signed interval envelopes, envelope hashing and time-stamp tokens.

Wire layout, all integers big-endian::

    "SVA1" | kind u8 | body_len u32 | body
    | cert_count u16 | (cert_len u32 | cert)*
    | sig_len u32 | signature
    | has_tsa u8 | [tsa_time u64 | tsa_sig_len u32 | tsa_sig | id_len u16 | tsa_cert_id]

The time-stamp token covers every byte from the magic through the
signature. The envelope hash covers the full encoding.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

from .pki import Certificate, CertificateError, SignerIdentity, validate_chain

MAGIC = b"SVA1"
HASH_LEN = 32


class EnvelopeError(ValueError):
    pass


class Malformed(EnvelopeError):
    pass


class EncodingRuleViolation(EnvelopeError):
    pass


class KeyMismatch(EnvelopeError):
    pass


class BadSignature(EnvelopeError):
    pass


class UntrustedChain(EnvelopeError):
    pass


class MissingPin(EnvelopeError):
    pass


class BadTsaSignature(EnvelopeError):
    pass


class Kind(enum.IntEnum):
    INITIAL = 0
    VOICE = 1
    FINAL = 2


class HashAlgorithm(enum.IntEnum):
    SHA256 = 1


@dataclass(frozen=True)
class HashDigest:
    value: bytes
    algorithm: HashAlgorithm = HashAlgorithm.SHA256

    def __post_init__(self) -> None:
        if self.algorithm is not HashAlgorithm.SHA256:
            raise ValueError(f"unsupported hash algorithm {self.algorithm!r}")
        if len(self.value) != HASH_LEN:
            raise ValueError("digest must be 32 bytes")

    def hex(self) -> str:
        return self.value.hex()


def digest(data: bytes) -> HashDigest:
    return HashDigest(hashlib.sha256(data).digest())


@dataclass(frozen=True)
class TsaToken:
    tsa_time: int
    tsa_signature: bytes
    tsa_cert_id: bytes


@dataclass(frozen=True)
class Envelope:
    kind: Kind
    body: bytes
    cert_chain: tuple[bytes, ...]
    signature: bytes
    tsa_token: Optional[TsaToken] = None

    def check_rules(self) -> None:
        initial = self.kind == Kind.INITIAL
        if initial != bool(self.cert_chain) or initial != (self.tsa_token is not None):
            raise EncodingRuleViolation(
                "certificates and time-stamp token belong to the initial interval only"
            )


def signed_payload(kind: Kind, body: bytes) -> bytes:
    return bytes([int(kind)]) + body


def _encode_signed_part(env: Envelope) -> bytes:
    out = [MAGIC, struct.pack("!BI", int(env.kind), len(env.body)), env.body]
    out.append(struct.pack("!H", len(env.cert_chain)))
    for cert in env.cert_chain:
        out.append(struct.pack("!I", len(cert)) + cert)
    out.append(struct.pack("!I", len(env.signature)) + env.signature)
    return b"".join(out)


def tsa_covered_bytes(env: Envelope) -> bytes:
    return _encode_signed_part(env)


def encode_envelope(env: Envelope) -> bytes:
    env.check_rules()
    out = _encode_signed_part(env)
    tok = env.tsa_token
    if tok is None:
        return out + b"\x00"
    return out + (
        b"\x01"
        + struct.pack("!QI", tok.tsa_time, len(tok.tsa_signature))
        + tok.tsa_signature
        + struct.pack("!H", len(tok.tsa_cert_id))
        + tok.tsa_cert_id
    )


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise Malformed(f"length overrun at offset {self.pos}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size))

    def done(self) -> None:
        if self.pos != len(self.data):
            raise Malformed(f"{len(self.data) - self.pos} trailing bytes")


def decode_envelope(data: bytes) -> Envelope:
    r = _Reader(bytes(data))
    if r.take(4) != MAGIC:
        raise Malformed("bad magic")
    kind_raw, body_len = r.unpack("!BI")
    try:
        kind = Kind(kind_raw)
    except ValueError:
        raise Malformed(f"unknown kind {kind_raw}") from None
    body = r.take(body_len)
    (cert_count,) = r.unpack("!H")
    certs = []
    for _ in range(cert_count):
        (n,) = r.unpack("!I")
        certs.append(r.take(n))
    (sig_len,) = r.unpack("!I")
    signature = r.take(sig_len)
    (has_tsa,) = r.unpack("!B")
    token = None
    if has_tsa == 1:
        tsa_time, n = r.unpack("!QI")
        tsa_sig = r.take(n)
        (id_len,) = r.unpack("!H")
        token = TsaToken(tsa_time, tsa_sig, r.take(id_len))
    elif has_tsa != 0:
        raise Malformed("bad time-stamp flag")
    r.done()
    env = Envelope(kind, body, tuple(certs), signature, token)
    try:
        env.check_rules()
    except EncodingRuleViolation as exc:
        raise Malformed(str(exc)) from None
    return env


def envelope_hash(encoded: bytes) -> HashDigest:
    return digest(encoded)


def sign_envelope(
    identity: SignerIdentity, kind: Kind, body: bytes, include_certs: bool
) -> Envelope:
    kind = Kind(kind)
    if include_certs != (kind == Kind.INITIAL):
        raise EncodingRuleViolation("certificate chain is carried by the initial interval only")
    if not identity.key_matches():
        raise KeyMismatch("private key does not match leaf certificate")
    sig = identity.sign(signed_payload(kind, body))
    certs = tuple(c.encode() for c in identity.cert_chain) if include_certs else ()
    return Envelope(kind, bytes(body), certs, sig)


def verify_envelope(
    env: Envelope, trust_root: Certificate, pinned_leaf: Optional[Certificate] = None
) -> Certificate:
    """Check the envelope signature and return the signer's leaf certificate."""
    if env.kind == Kind.INITIAL:
        try:
            chain = [Certificate.decode(c) for c in env.cert_chain]
            leaf = validate_chain(chain, trust_root)
        except CertificateError as exc:
            raise UntrustedChain(str(exc)) from None
    else:
        if pinned_leaf is None:
            raise MissingPin("no pinned signer for a non-initial interval")
        leaf = pinned_leaf
    if not leaf.verify(env.signature, signed_payload(env.kind, env.body)):
        raise BadSignature(f"signature does not verify under {leaf.subject!r}")
    return leaf


def _tsa_message(tsa_time: int, covered: bytes) -> bytes:
    return b"SVTS" + struct.pack("!Q", tsa_time) + hashlib.sha256(covered).digest()


def tsa_issue(tsa_identity: SignerIdentity, covered: bytes, now: int) -> TsaToken:
    return TsaToken(
        now, tsa_identity.sign(_tsa_message(now, covered)), tsa_identity.leaf.cert_id
    )


def tsa_verify(token: TsaToken, covered: bytes, tsa_cert: Certificate) -> int:
    if token.tsa_cert_id != tsa_cert.cert_id:
        raise BadTsaSignature("token names a different TSA certificate")
    if not tsa_cert.verify(token.tsa_signature, _tsa_message(token.tsa_time, covered)):
        raise BadTsaSignature("time-stamp signature invalid")
    return token.tsa_time


def attach_token(env: Envelope, token: TsaToken) -> Envelope:
    return Envelope(env.kind, env.body, env.cert_chain, env.signature, token)


class TimestampAuthority:
    """In-process time-stamping service; ``clock`` returns microseconds."""

    def __init__(self, identity: SignerIdentity, clock):
        self.identity = identity
        self.clock = clock
        self.available = True
        self.issued = 0

    @property
    def certificate(self) -> Certificate:
        return self.identity.leaf

    def timestamp(self, covered: bytes) -> TsaToken:
        if not self.available:
            raise TsaUnavailable("time-stamping service unavailable")
        self.issued += 1
        return tsa_issue(self.identity, covered, self.clock())


class TsaUnavailable(RuntimeError):
    pass


def tsa_certs_by_id(certs: Sequence[Certificate]) -> dict[bytes, Certificate]:
    return {c.cert_id: c for c in certs}
