"""Minimal certificate hierarchy backed by Ed25519 keys.

Certificates are compact binary blobs rather than X.509: a subject name,
a raw public key, the id of the issuing certificate, a CA flag and the
issuer's signature over all preceding fields. A certificate's id is the
SHA-256 digest of its encoding.
"""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass
from typing import Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

CERT_MAGIC = b"SVC1"
SIGNATURE_LEN = 64


class CertificateError(ValueError):
    pass


def _raw_public(key: Ed25519PrivateKey) -> bytes:
    return key.public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )


def _raw_private(key: Ed25519PrivateKey) -> bytes:
    return key.private_bytes(
        serialization.Encoding.Raw,
        serialization.PrivateFormat.Raw,
        serialization.NoEncryption(),
    )


@dataclass(frozen=True)
class Certificate:
    subject: str
    public_key: bytes
    issuer_id: bytes
    is_ca: bool
    signature: bytes

    def tbs(self) -> bytes:
        name = self.subject.encode("utf-8")
        return (
            CERT_MAGIC
            + struct.pack("!H", len(name))
            + name
            + self.public_key
            + self.issuer_id
            + bytes([int(self.is_ca)])
        )

    def encode(self) -> bytes:
        return self.tbs() + self.signature

    @property
    def cert_id(self) -> bytes:
        return hashlib.sha256(self.encode()).digest()

    @classmethod
    def decode(cls, data: bytes) -> "Certificate":
        data = bytes(data)
        if data[:4] != CERT_MAGIC or len(data) < 6:
            raise CertificateError("bad certificate magic")
        (name_len,) = struct.unpack_from("!H", data, 4)
        pos = 6 + name_len
        if len(data) != pos + 32 + 32 + 1 + SIGNATURE_LEN:
            raise CertificateError("bad certificate length")
        try:
            subject = data[6:pos].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CertificateError("subject is not UTF-8") from exc
        flag = data[pos + 64]
        if flag > 1:
            raise CertificateError("bad CA flag")
        return cls(
            subject=subject,
            public_key=data[pos : pos + 32],
            issuer_id=data[pos + 32 : pos + 64],
            is_ca=bool(flag),
            signature=data[pos + 65 :],
        )

    def verifier(self) -> Ed25519PublicKey:
        return Ed25519PublicKey.from_public_bytes(self.public_key)

    def verify(self, signature: bytes, message: bytes) -> bool:
        try:
            self.verifier().verify(signature, message)
        except InvalidSignature:
            return False
        return True


def issue_certificate(
    subject: str,
    subject_key: Ed25519PrivateKey,
    issuer_key: Ed25519PrivateKey | None = None,
    issuer: Certificate | None = None,
    is_ca: bool = False,
) -> Certificate:
    """Issue a certificate; omit ``issuer`` for a self-signed root."""
    if issuer is None:
        issuer_id = b"\x00" * 32
        issuer_key = subject_key
    else:
        if issuer_key is None:
            raise ValueError("issuer_key required with issuer")
        issuer_id = issuer.cert_id
    unsigned = Certificate(subject, _raw_public(subject_key), issuer_id, is_ca, b"")
    return Certificate(
        subject, unsigned.public_key, issuer_id, is_ca, issuer_key.sign(unsigned.tbs())
    )


def validate_chain(chain: Sequence[Certificate], trust_root: Certificate) -> Certificate:
    """Check ``chain`` (leaf first, root excluded) links up to ``trust_root``.

    Returns the leaf certificate.
    """
    if not chain:
        raise CertificateError("empty certificate chain")
    for i, cert in enumerate(chain):
        issuer = chain[i + 1] if i + 1 < len(chain) else trust_root
        if cert.issuer_id != issuer.cert_id:
            raise CertificateError(f"certificate {i} not issued by its successor")
        if not issuer.is_ca:
            raise CertificateError(f"issuer of certificate {i} is not a CA")
        if not issuer.verify(cert.signature, cert.tbs()):
            raise CertificateError(f"bad signature on certificate {i}")
    return chain[0]


@dataclass(frozen=True)
class SignerIdentity:
    private_key: Ed25519PrivateKey
    cert_chain: tuple[Certificate, ...]

    def __post_init__(self) -> None:
        if not self.cert_chain:
            raise ValueError("identity needs at least a leaf certificate")

    @property
    def leaf(self) -> Certificate:
        return self.cert_chain[0]

    def key_matches(self) -> bool:
        return _raw_public(self.private_key) == self.leaf.public_key

    def sign(self, message: bytes) -> bytes:
        return self.private_key.sign(message)

    def private_bytes(self) -> bytes:
        return _raw_private(self.private_key)


def key_from_seed(seed: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(hashlib.sha256(seed).digest())


@dataclass(frozen=True)
class TestPki:
    """Self-contained hierarchy: root -> intermediate -> {recorder, TSA}."""

    __test__ = False

    root: Certificate
    recorder: SignerIdentity
    tsa: SignerIdentity
    anchor_tsa: SignerIdentity


def make_test_pki(seed: int | str = 0, name: str = "voicearc") -> TestPki:
    """Generate a deterministic PKI from ``seed``."""
    rng = random.Random(f"pki:{seed}")

    def key() -> Ed25519PrivateKey:
        return Ed25519PrivateKey.from_private_bytes(rng.randbytes(32))

    root_key, inter_key = key(), key()
    root = issue_certificate(f"{name} root", root_key, is_ca=True)
    inter = issue_certificate(f"{name} issuing CA", inter_key, root_key, root, is_ca=True)

    def leaf(subject: str) -> SignerIdentity:
        k = key()
        return SignerIdentity(k, (issue_certificate(subject, k, inter_key, inter), inter))

    return TestPki(root, leaf(f"{name} recorder"), leaf(f"{name} TSA T1"), leaf(f"{name} TSA T2"))


# On-disk forms used by the command line tools.

def encode_cert_list(certs: Sequence[Certificate]) -> bytes:
    out = [struct.pack("!H", len(certs))]
    for c in certs:
        blob = c.encode()
        out.append(struct.pack("!I", len(blob)) + blob)
    return b"".join(out)


def decode_cert_list(data: bytes) -> list[Certificate]:
    (count,) = struct.unpack_from("!H", data, 0)
    pos, certs = 2, []
    for _ in range(count):
        (n,) = struct.unpack_from("!I", data, pos)
        certs.append(Certificate.decode(data[pos + 4 : pos + 4 + n]))
        pos += 4 + n
    return certs


def save_identity(identity: SignerIdentity, key_path, chain_path) -> None:
    with open(key_path, "wb") as fh:
        fh.write(identity.private_bytes())
    with open(chain_path, "wb") as fh:
        fh.write(encode_cert_list(identity.cert_chain))


def load_identity(key_path, chain_path) -> SignerIdentity:
    with open(key_path, "rb") as fh:
        key = Ed25519PrivateKey.from_private_bytes(fh.read())
    with open(chain_path, "rb") as fh:
        chain = tuple(decode_cert_list(fh.read()))
    return SignerIdentity(key, chain)


def load_certificate(path) -> Certificate:
    with open(path, "rb") as fh:
        return Certificate.decode(fh.read())
