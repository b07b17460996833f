"""Offline verification, inspection and extraction of archived call files."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .arc.checks import ArcConfig, CheckCode, CheckReport, FrameChecker
from .arc.store import split_records
from .chain import (
    CallMeta,
    Direction,
    FinalBody,
    InitialBody,
    TerminationReason,
    VoiceBody,
    decode_body,
)
from .envelope import EnvelopeError, Kind, decode_envelope, envelope_hash
from .pki import Certificate
from .rtp import RtpError, parse_rtp


class VerificationStatus(enum.Enum):
    COMPLETE_VERIFIED = "CompleteVerified"
    INCOMPLETE_PREFIX_VERIFIED = "IncompletePrefixVerified"
    REJECTED = "Rejected"

    @property
    def exit_code(self) -> int:
        return {"CompleteVerified": 0, "Rejected": 1, "IncompletePrefixVerified": 2}[self.value]


@dataclass
class CallSummary:
    nonce: Optional[bytes] = None
    start_time: Optional[int] = None
    from_uri: str = ""
    to_uri: str = ""
    duration: int = 0
    interval_count: int = 0
    reason: Optional[TerminationReason] = None


@dataclass
class EnvelopeRow:
    position: int
    kind: Optional[Kind]
    direction: Optional[Direction]
    time: Optional[int]
    packets: int
    hash_prefix: str
    report: Optional[CheckReport]


@dataclass
class VerificationResult:
    status: VerificationStatus
    summary: CallSummary
    reports: list[CheckReport] = field(default_factory=list)
    rows: list[EnvelopeRow] = field(default_factory=list)
    position: Optional[int] = None
    check: Optional[CheckCode] = None
    detail: str = ""
    torn_tail: bool = False

    @property
    def ok(self) -> bool:
        return self.status is VerificationStatus.COMPLETE_VERIFIED


def _row(position: int, record: bytes, report: Optional[CheckReport]) -> EnvelopeRow:
    kind = direction = when = None
    packets = 0
    try:
        env = decode_envelope(record)
        kind = env.kind
        body = decode_body(env.kind, env.body)
        if isinstance(body, VoiceBody):
            direction, when, packets = body.direction, body.time, len(body.packets)
        elif isinstance(body, FinalBody):
            when = body.time
        else:
            when = body.meta.start_time
    except EnvelopeError:
        pass
    return EnvelopeRow(position, kind, direction, when, packets, envelope_hash(record).hex()[:12], report)


def verify_archive(
    file: bytes,
    trust_root: Certificate,
    tsa_certs: Certificate | Sequence[Certificate] | Mapping[bytes, Certificate],
    config: ArcConfig = ArcConfig(),
    known_nonces=None,
) -> VerificationResult:
    """Re-run the archive's checks over a stored call file.

    The arrival-clock drift check has no meaning offline and is reported as
    not applicable. ``known_nonces``, if given, enables the nonce check
    against other archived calls.
    """
    if isinstance(tsa_certs, Certificate):
        tsa_certs = [tsa_certs]
    seen = None if known_nonces is None else known_nonces.__contains__
    checker = FrameChecker(trust_root, tsa_certs, config, seen_nonce=seen)
    records, torn = split_records(file)
    result = VerificationResult(VerificationStatus.INCOMPLETE_PREFIX_VERIFIED, CallSummary())
    result.torn_tail = torn
    summary = result.summary
    last_time = None
    for pos, record in enumerate(records, start=1):
        if result.status is VerificationStatus.REJECTED:
            result.rows.append(_row(pos, record, None))
            continue
        ev = checker.evaluate(record)
        result.reports.append(ev.report)
        result.rows.append(_row(pos, record, ev.report))
        if not ev.report.passed:
            code, detail = ev.report.failure
            result.status = VerificationStatus.REJECTED
            result.position, result.check, result.detail = pos, code, detail
            continue
        ev.commit()
        body = ev.body
        summary.interval_count += 1
        if isinstance(body, InitialBody):
            m = body.meta
            summary.nonce, summary.start_time = m.nonce, m.start_time
            summary.from_uri, summary.to_uri = m.from_uri, m.to_uri
            last_time = m.start_time
        else:
            last_time = body.time
            if isinstance(body, FinalBody):
                summary.reason = body.reason
        if summary.start_time is not None and last_time is not None:
            summary.duration = last_time - summary.start_time
    if result.status is not VerificationStatus.REJECTED and checker.finished:
        result.status = VerificationStatus.COMPLETE_VERIFIED
    return result


# --- extraction -------------------------------------------------------------

class UnknownPayloadType(UserWarning):
    pass


@dataclass(frozen=True)
class ExtractedPacket:
    abs_seq: int
    interval_time: int
    payload_type: int
    codec: str
    raw: bytes

    @property
    def payload(self) -> bytes:
        return parse_rtp(self.raw).payload


@dataclass
class Extraction:
    meta: CallMeta
    channels: dict
    warnings: list[str] = field(default_factory=list)


def extract_streams(file: bytes) -> Extraction:
    """Split an archived call into per-direction packet lists.

    Verify the file first; extraction only decodes. Packets whose payload
    type is missing from the call's payload map keep a numeric label and
    raise an :class:`UnknownPayloadType` warning.
    """
    records, _ = split_records(file)
    meta: Optional[CallMeta] = None
    channels: dict = {d: [] for d in Direction}
    notes: list[str] = []
    names: dict[int, str] = {}
    for record in records:
        env = decode_envelope(record)
        body = decode_body(env.kind, env.body)
        if isinstance(body, InitialBody):
            meta = body.meta
            names = meta.codec_names()
        elif isinstance(body, VoiceBody):
            for seq, raw in zip(body.abs_seqs, body.packets):
                try:
                    pt = parse_rtp(raw).payload_type
                except RtpError:
                    pt = -1
                codec = names.get(pt)
                if codec is None:
                    codec = str(pt)
                    msg = f"payload type {pt} not in payload map (sequence {seq})"
                    notes.append(msg)
                    warnings.warn(msg, UnknownPayloadType, stacklevel=2)
                channels[body.direction].append(
                    ExtractedPacket(seq, body.time, pt, codec, raw)
                )
    if meta is None:
        raise ValueError("archive has no initial interval")
    for d in Direction:
        channels[d].sort(key=lambda p: p.abs_seq)
    return Extraction(meta, channels, notes)


# --- inspection -------------------------------------------------------------

_DIR_LABEL = {Direction.A_TO_B: "AtoB", Direction.B_TO_A: "BtoA"}
_KIND_LABEL = {Kind.INITIAL: "Initial", Kind.VOICE: "Voice", Kind.FINAL: "Final"}


def format_listing(result: VerificationResult) -> str:
    s = result.summary
    head = f"status: {result.status.value}  envelopes: {len(result.rows)}"
    if s.reason is not None:
        head += f"  reason: {s.reason.name}"
    if result.status is VerificationStatus.REJECTED:
        head += f"  rejected at: {result.position} ({result.check.name})"
    if result.torn_tail:
        head += "  torn tail"
    lines = [head, f"{'pos':>4}  {'kind':<7}  {'dir':<4}  {'time':>17}  {'pkts':>4}  {'hash':<12}  check"]
    for r in result.rows:
        if r.report is None:
            check = "unchecked"
        elif r.report.passed:
            check = "ok"
        else:
            code, detail = r.report.failure
            check = f"FAIL {code.name}: {detail}"
        lines.append(
            f"{r.position:>4}  {_KIND_LABEL.get(r.kind, '?'):<7}  "
            f"{_DIR_LABEL.get(r.direction, '-'):<4}  "
            f"{'-' if r.time is None else r.time:>17}  {r.packets:>4}  {r.hash_prefix:<12}  {check}"
        )
    return "\n".join(lines)


def inspect(file: bytes, trust_root: Certificate, tsa_certs, config: ArcConfig = ArcConfig()) -> str:
    return format_listing(verify_archive(file, trust_root, tsa_certs, config))
