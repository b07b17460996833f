"""Per-frame integrity checks shared by the live archive and offline verifier."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

from ..chain import (
    ChainError,
    ChainState,
    Direction,
    InitialBody,
    IntervalBody,
    InterleaveViolation,
    VoiceBody,
    chain_step,
    decode_body,
)
from ..envelope import (
    EnvelopeError,
    Envelope,
    Kind,
    Malformed,
    decode_envelope,
    tsa_covered_bytes,
    tsa_verify,
    verify_envelope,
)
from ..pki import Certificate
from ..rtp import SEQ_MOD, TS_MOD, RtpError, extend_nearest, parse_rtp
from ..vsec import loss_exceeds


class CheckCode(enum.IntEnum):
    CHK1 = 1
    CHK2 = 2
    CHK3 = 3
    CHK4 = 4
    CHK5 = 5
    CHK6 = 6
    CHAIN = 7
    INTERLEAVE = 8
    NONCE = 9
    MALFORMED = 10
    STORAGE = 11


class Status(enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    NOT_APPLICABLE = "n/a"


@dataclass(frozen=True)
class CheckResult:
    status: Status
    detail: str = ""


PASS = CheckResult(Status.PASS)
NA = CheckResult(Status.NOT_APPLICABLE)


@dataclass
class CheckReport:
    results: dict = field(default_factory=lambda: {c: NA for c in CheckCode})

    def set(self, code: CheckCode, result: CheckResult) -> None:
        self.results[code] = result

    def fail(self, code: CheckCode, detail: str) -> "CheckReport":
        self.results[code] = CheckResult(Status.FAIL, detail)
        return self

    @property
    def passed(self) -> bool:
        return self.failure is None

    @property
    def failure(self) -> Optional[tuple[CheckCode, str]]:
        for code, res in self.results.items():
            if res.status is Status.FAIL:
                return code, res.detail
        return None

    @property
    def failed_code(self) -> Optional[CheckCode]:
        f = self.failure
        return f[0] if f else None

    def __getitem__(self, code: CheckCode) -> CheckResult:
        return self.results[code]

    def summary(self) -> str:
        f = self.failure
        return "ok" if f is None else f"{f[0].name}: {f[1]}"


@dataclass(frozen=True)
class ArcConfig:
    interval_duration: int = 1_000_000
    loss_threshold: float = 0.01

    @property
    def drift_bound(self) -> int:
        return 2 * self.interval_duration


_TS_BASE = TS_MOD


@dataclass(frozen=True)
class ChannelCursor:
    highest: int = -1
    received: int = 0
    last_ext_ts: Optional[int] = None
    first_ext_ts: Optional[int] = None
    first_time: Optional[int] = None
    # RTP sequence number carried by absolute sequence 0, learned from the
    # first packet seen in this direction.
    seq_offset: Optional[int] = None


@dataclass
class Evaluation:
    """Outcome of checking one frame; ``commit`` applies it to the checker."""

    report: CheckReport
    envelope: Optional[Envelope] = None
    body: Optional[IntervalBody] = None
    _apply: Optional[Callable[[], None]] = None

    def commit(self) -> None:
        if not self.report.passed or self._apply is None:
            raise RuntimeError("cannot commit a failed evaluation")
        self._apply()
        self._apply = None


class FrameChecker:
    """Stateful check sequence for one call's frames.

    ``seen_nonce`` answers whether a nonce is already archived; ``None``
    marks the nonce check not applicable. ``arrival_time`` of ``None``
    marks the arrival-clock drift check not applicable.
    """

    def __init__(
        self,
        trust_root: Certificate,
        tsa_certs: Mapping[bytes, Certificate] | Sequence[Certificate],
        config: ArcConfig = ArcConfig(),
        seen_nonce: Optional[Callable[[bytes], bool]] = None,
    ):
        self.trust_root = trust_root
        if not isinstance(tsa_certs, Mapping):
            tsa_certs = {c.cert_id: c for c in tsa_certs}
        self.tsa_certs = dict(tsa_certs)
        self.config = config
        self.seen_nonce = seen_nonce
        self.chain = ChainState()
        self.pinned_leaf: Optional[Certificate] = None
        self.rates: dict[int, int] = {}
        self.nonce: Optional[bytes] = None
        self.cursors = {d: ChannelCursor() for d in Direction}

    @property
    def finished(self) -> bool:
        return self.chain.finished

    def evaluate(self, encoded: bytes, arrival_time: Optional[int] = None) -> Evaluation:
        report = CheckReport()
        cfg = self.config
        try:
            env = decode_envelope(encoded)
        except Malformed as exc:
            return Evaluation(report.fail(CheckCode.MALFORMED, str(exc)))
        report.set(CheckCode.MALFORMED, PASS)

        # CHK2: signature, pinning the leaf on the initial interval.
        if env.kind == Kind.INITIAL and self.pinned_leaf is not None:
            return Evaluation(report.fail(CheckCode.CHAIN, "second initial interval"), env)
        try:
            leaf = verify_envelope(env, self.trust_root, self.pinned_leaf)
        except EnvelopeError as exc:
            return Evaluation(report.fail(CheckCode.CHK2, f"{type(exc).__name__}: {exc}"), env)
        report.set(CheckCode.CHK2, PASS)

        try:
            body = decode_body(env.kind, env.body)
        except Malformed as exc:
            return Evaluation(report.fail(CheckCode.MALFORMED, f"body: {exc}"), env)

        # CHK1: external time stamp and agreement with the recorder's clock.
        if isinstance(body, InitialBody):
            tok = env.tsa_token
            assert tok is not None
            tsa_cert = self.tsa_certs.get(tok.tsa_cert_id)
            if tsa_cert is None:
                return Evaluation(report.fail(CheckCode.CHK1, "unknown TSA certificate"), env, body)
            try:
                tsa_time = tsa_verify(tok, tsa_covered_bytes(env), tsa_cert)
            except EnvelopeError as exc:
                return Evaluation(report.fail(CheckCode.CHK1, str(exc)), env, body)
            skew = abs(tsa_time - body.meta.start_time)
            if skew > cfg.drift_bound:
                return Evaluation(
                    report.fail(CheckCode.CHK1, f"TSA time differs from start time by {skew} us"),
                    env,
                    body,
                )
            report.set(CheckCode.CHK1, PASS)
            if self.seen_nonce is not None:
                if self.seen_nonce(body.meta.nonce):
                    return Evaluation(
                        report.fail(CheckCode.NONCE, f"nonce {body.meta.nonce.hex()} reused"),
                        env,
                        body,
                    )
                report.set(CheckCode.NONCE, PASS)

        try:
            new_chain = chain_step(self.chain, encoded, env, body)
        except InterleaveViolation as exc:
            return Evaluation(report.fail(CheckCode.INTERLEAVE, str(exc)), env, body)
        except ChainError as exc:
            return Evaluation(report.fail(CheckCode.CHAIN, f"{type(exc).__name__}: {exc}"), env, body)
        report.set(CheckCode.CHAIN, PASS)
        if isinstance(body, VoiceBody):
            report.set(CheckCode.INTERLEAVE, PASS)

        new_cursor = None
        if isinstance(body, VoiceBody):
            cur = self.cursors[body.direction]
            received = cur.received + len(body.abs_seqs)
            highest = max(cur.highest, body.abs_seqs[-1]) if body.abs_seqs else cur.highest
            if loss_exceeds(received, highest, cfg.loss_threshold):
                loss = 1 - received / (highest + 1)
                return Evaluation(
                    report.fail(CheckCode.CHK4, f"packet loss {loss:.4%} on {body.direction.name}"),
                    env,
                    body,
                )
            report.set(CheckCode.CHK4, PASS)

        if not isinstance(body, InitialBody) and arrival_time is not None:
            drift = abs(body.time - arrival_time)
            if drift > cfg.drift_bound:
                return Evaluation(
                    report.fail(CheckCode.CHK5, f"interval time drifted {drift} us from arrival"),
                    env,
                    body,
                )
            report.set(CheckCode.CHK5, PASS)

        if isinstance(body, VoiceBody):
            problem, new_cursor = self._rtp_consistency(body, self.cursors[body.direction])
            if problem:
                return Evaluation(report.fail(CheckCode.CHK6, problem), env, body)
            new_cursor = replace(new_cursor, received=received, highest=highest)
            report.set(CheckCode.CHK6, PASS)

        def apply() -> None:
            self.chain = new_chain
            if isinstance(body, InitialBody):
                self.pinned_leaf = leaf
                self.rates = body.meta.clock_rates()
                self.nonce = body.meta.nonce
            elif new_cursor is not None:
                self.cursors[body.direction] = new_cursor

        return Evaluation(report, env, body, apply)

    def _rtp_consistency(
        self, body: VoiceBody, cur: ChannelCursor
    ) -> tuple[Optional[str], ChannelCursor]:
        last_seq = cur.highest
        last_ts, first_ts, first_time = cur.last_ext_ts, cur.first_ext_ts, cur.first_time
        offset = cur.seq_offset
        for abs_seq, raw in zip(body.abs_seqs, body.packets):
            try:
                pkt = parse_rtp(raw)
            except RtpError as exc:
                return f"packet {abs_seq} is not RTP: {exc}", cur
            if abs_seq <= last_seq:
                return f"sequence {abs_seq} repeats or goes backwards", cur
            if offset is None:
                offset = (pkt.seq16 - abs_seq) % SEQ_MOD
            elif pkt.seq16 != (abs_seq + offset) % SEQ_MOD:
                return f"RTP sequence {pkt.seq16} disagrees with absolute {abs_seq}", cur
            if last_ts is None:
                ext_ts = _TS_BASE + pkt.ts32
                first_ts, first_time = ext_ts, body.time
            else:
                ext_ts = extend_nearest(pkt.ts32, last_ts, TS_MOD)
                if ext_ts < last_ts:
                    return f"RTP timestamp goes backwards at sequence {abs_seq}", cur
            rate = self.rates.get(pkt.payload_type)
            if rate:
                media = (ext_ts - first_ts) * 1_000_000 // rate
                elapsed = body.time - first_time
                if abs(media - elapsed) > self.config.drift_bound:
                    return (
                        f"RTP time {media} us inconsistent with interval time {elapsed} us",
                        cur,
                    )
            last_seq, last_ts = abs_seq, ext_ts
        return None, ChannelCursor(cur.highest, cur.received, last_ts, first_ts, first_time, offset)
