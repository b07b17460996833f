"""Recorder pipeline: replay window, chunker, QoS and signed streaming."""

from __future__ import annotations

import enum
import logging
import secrets
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

from .chain import (
    DEFAULT_INTERVAL_US,
    CallMeta,
    Chunker,
    Direction,
    FinalBody,
    Flush,
    InitialBody,
    PayloadMapping,
    TerminationReason,
    VoiceBody,
    encode_body,
)
from .envelope import (
    HashDigest,
    Kind,
    TsaUnavailable,
    attach_token,
    encode_envelope,
    envelope_hash,
    sign_envelope,
    tsa_covered_bytes,
)
from .pki import SignerIdentity
from .rtp import ReplayWindow, RtpError, Verdict, parse_rtp

log = logging.getLogger(__name__)

PARSE_FAILURE_CAP = 10


class SessionError(RuntimeError):
    pass


class AlreadyClosed(SessionError):
    pass


class ArcRejected(SessionError):
    def __init__(self, code: int, message: str = ""):
        super().__init__(message or f"archive rejected frame with code {code}")
        self.code = code


class Transport(Protocol):
    def send(self, encoded: bytes) -> None:
        """Deliver one envelope; raise ArcRejected on a REJECT response."""


class TsaClient(Protocol):
    def timestamp(self, covered: bytes):
        ...


class QosAction(enum.Enum):
    TERMINATE = "terminate"


@dataclass(frozen=True)
class QosPolicy:
    loss_threshold: float = 0.01
    action: QosAction = QosAction.TERMINATE

    def __post_init__(self) -> None:
        if not 0 < self.loss_threshold < 1:
            raise ValueError("loss threshold must lie strictly between 0 and 1")


@dataclass
class ChannelQos:
    highest_abs_seq: int = -1
    received_count: int = 0

    def record(self, abs_seq: int) -> None:
        self.received_count += 1
        self.highest_abs_seq = max(self.highest_abs_seq, abs_seq)

    @property
    def loss(self) -> float:
        if self.highest_abs_seq < 0:
            return 0.0
        return 1.0 - self.received_count / (self.highest_abs_seq + 1)

    def exceeds(self, threshold: float) -> bool:
        return loss_exceeds(self.received_count, self.highest_abs_seq, threshold)


def loss_exceeds(received: int, highest: int, threshold: float) -> bool:
    """Exact test of ``1 - received/(highest+1) > threshold``.

    The threshold is read as the decimal it prints as, so 0.01 means 1/100.
    """
    if highest < 0:
        return False
    expected = highest + 1
    return Fraction(expected - received, expected) > Fraction(str(threshold))


@dataclass
class QosState:
    channels: dict = field(default_factory=lambda: {d: ChannelQos() for d in Direction})

    def worst_loss(self) -> float:
        return max(c.loss for c in self.channels.values())


class State(enum.Enum):
    INITIALIZING = "initializing"
    STREAMING = "streaming"
    CLOSED = "closed"


@dataclass(frozen=True)
class RecorderConfig:
    interval_duration: int = DEFAULT_INTERVAL_US
    policy: QosPolicy = QosPolicy()
    parse_failure_cap: int = PARSE_FAILURE_CAP

    @property
    def drift_bound(self) -> int:
        return 2 * self.interval_duration


class RecorderSession:
    """One recorded call. Use :func:`start_session` to create."""

    def __init__(
        self,
        meta: CallMeta,
        identity: SignerIdentity,
        transport: Transport,
        config: RecorderConfig = RecorderConfig(),
        call_id: Optional[bytes] = None,
    ):
        self.call_id = call_id or secrets.token_bytes(16)
        self.meta = meta
        self.identity = identity
        self.transport = transport
        self.config = config
        self.policy = config.policy
        rates = meta.clock_rates()
        self.windows = {
            d: ReplayWindow(drift_bound_us=config.drift_bound, clock_rates=rates)
            for d in Direction
        }
        self.chunker = Chunker(config.interval_duration)
        self.qos = QosState()
        self.send_prev_hash: Optional[HashDigest] = None
        self.next_index = 1
        self.state = State.INITIALIZING
        self.reason: Optional[TerminationReason] = None
        self.sign_count = 0
        self.sent_frames = 0
        self.parse_failures = 0
        self.replays_dropped = 0
        self.discarded_packets = 0

    # -- signing -----------------------------------------------------------

    def _sign(self, kind: Kind, body: bytes):
        self.sign_count += 1
        return sign_envelope(self.identity, kind, body, include_certs=kind == Kind.INITIAL)

    def _send(self, encoded: bytes) -> None:
        self.send_prev_hash = envelope_hash(encoded)
        self.sent_frames += 1
        try:
            self.transport.send(encoded)
        except ArcRejected:
            # The archive dropped the connection; nothing more can be chained.
            self.state = State.CLOSED
            self.reason = TerminationReason.TAMPER_DETECTED
            raise

    def _open(self, tsa_client: TsaClient) -> bytes:
        env = self._sign(Kind.INITIAL, encode_body(InitialBody(self.meta)))
        try:
            token = tsa_client.timestamp(tsa_covered_bytes(env))
        except (TsaUnavailable, OSError) as exc:
            self.state = State.CLOSED
            raise TsaUnavailable(str(exc)) from exc
        encoded = encode_envelope(attach_token(env, token))
        self._send(encoded)
        self.state = State.STREAMING
        return encoded

    def _emit_voice(self, flush: Flush) -> bytes:
        assert self.send_prev_hash is not None
        body = VoiceBody(
            prev_hash=self.send_prev_hash,
            index=self.next_index,
            time=flush.time,
            direction=flush.direction,
            abs_seqs=flush.abs_seqs,
            packets=flush.packets,
        )
        self.next_index += 1
        encoded = encode_envelope(self._sign(Kind.VOICE, encode_body(body)))
        self._send(encoded)
        return encoded

    # -- public operations ---------------------------------------------------

    def ingest_packet(self, direction: Direction, datagram: bytes, now: int) -> list[bytes]:
        """Process one datagram; returns the envelopes emitted as a result."""
        if self.state is not State.STREAMING:
            raise AlreadyClosed(f"session is {self.state.value}")
        direction = Direction(direction)
        try:
            packet = parse_rtp(datagram)
        except RtpError as exc:
            self.parse_failures += 1
            log.debug("undecodable datagram on %s: %s", direction.name, exc)
            if self.parse_failures >= self.config.parse_failure_cap:
                return self.tick(now) + [
                    self.close(TerminationReason.PROTOCOL_OR_NETWORK_ERROR, now)
                ]
            return self.tick(now)
        self.parse_failures = 0

        decision = self.windows[direction].accept(packet, now)
        if decision.verdict is Verdict.INCONSISTENT:
            log.warning("media time inconsistent with wallclock on %s", direction.name)
            return [self.close(TerminationReason.TAMPER_DETECTED, now)]
        if decision.verdict is Verdict.REPLAY:
            self.replays_dropped += 1
            return self.tick(now)

        abs_seq = decision.abs_seq
        emitted = self.tick(now)
        if not self.chunker.accepts(direction, abs_seq):
            # Arrived after its interval was already signed; counts as lost.
            self.chunker.late_drops += 1
            return emitted
        self.chunker.push(direction, abs_seq, packet.raw_bytes, now)
        qos = self.qos.channels[direction]
        qos.record(abs_seq)
        if qos.exceeds(self.policy.loss_threshold):
            log.warning("packet loss %.4f on %s above threshold", qos.loss, direction.name)
            emitted.append(self.close(TerminationReason.QOS_VIOLATION, now))
        return emitted

    def tick(self, now: int) -> list[bytes]:
        """Flush intervals whose windows have closed by ``now``."""
        if self.state is not State.STREAMING:
            return []
        return [self._emit_voice(f) for f in self.chunker.tick(now)]

    def close(self, reason: TerminationReason, now: int) -> bytes:
        """Terminate the recording and send the final interval."""
        if self.state is not State.STREAMING:
            raise AlreadyClosed(f"session is {self.state.value}")
        reason = TerminationReason(reason)
        if reason in (TerminationReason.QOS_VIOLATION, TerminationReason.TAMPER_DETECTED):
            self.discarded_packets += self.chunker.discard()
        else:
            self.tick(now)
            for flush in self.chunker.drain():
                self._emit_voice(flush)
        assert self.send_prev_hash is not None
        body = FinalBody(prev_hash=self.send_prev_hash, time=now, reason=reason)
        encoded = encode_envelope(self._sign(Kind.FINAL, encode_body(body)))
        self.state = State.CLOSED
        self.reason = reason
        self._send(encoded)
        return encoded

    @property
    def buffered_packets(self) -> int:
        return self.chunker.buffered_packets


def start_session(
    meta: CallMeta,
    identity: SignerIdentity,
    tsa_client: TsaClient,
    arc_transport: Transport,
    now: int,
    config: RecorderConfig = RecorderConfig(),
    call_id: Optional[bytes] = None,
    nonce_source: Callable[[int], bytes] = secrets.token_bytes,
) -> RecorderSession:
    """Open a recording: builds, time-stamps and sends the initial interval.

    The nonce and start time in ``meta`` are replaced by a fresh nonce
    and ``now``.
    """
    meta = CallMeta(nonce_source(16), now, meta.from_uri, meta.to_uri, meta.payload_map)
    session = RecorderSession(meta, identity, arc_transport, config, call_id)
    session._open(tsa_client)
    return session


def new_call_meta(
    from_uri: str,
    to_uri: str,
    payload_map=(),
    start_time: int = 0,
    nonce_source: Callable[[int], bytes] = secrets.token_bytes,
) -> CallMeta:
    mapping = tuple(PayloadMapping(*m) for m in payload_map)
    return CallMeta(nonce_source(16), start_time, from_uri, to_uri, mapping)
