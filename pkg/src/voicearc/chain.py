"""Interval bodies, the interleaving chunker and the chain verifier."""

from __future__ import annotations

import bisect
import enum
import re
import struct
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence, Union

from .envelope import HASH_LEN, Envelope, HashDigest, Kind, Malformed, envelope_hash

DEFAULT_INTERVAL_US = 1_000_000
MAX_SAME_DIRECTION_RUN = 2


class Direction(enum.IntEnum):
    A_TO_B = 0
    B_TO_A = 1

    @property
    def other(self) -> "Direction":
        return Direction(1 - self)


class TerminationReason(enum.IntEnum):
    PROTOCOL_OR_NETWORK_ERROR = 0
    HANGUP_A = 1
    HANGUP_B = 2
    QOS_VIOLATION = 3
    TAMPER_DETECTED = 4


class PayloadMapping(NamedTuple):
    payload_type: int
    codec_name: str
    clock_rate: int
    channels: int = 1


@dataclass(frozen=True)
class CallMeta:
    nonce: bytes
    start_time: int
    from_uri: str
    to_uri: str
    payload_map: tuple[PayloadMapping, ...] = ()

    def __post_init__(self) -> None:
        if len(self.nonce) != 16:
            raise ValueError("nonce must be 16 bytes")
        pts = [m.payload_type for m in self.payload_map]
        if len(set(pts)) != len(pts):
            raise ValueError("duplicate payload type in payload map")

    def clock_rates(self) -> dict[int, int]:
        return {m.payload_type: m.clock_rate for m in self.payload_map}

    def codec_names(self) -> dict[int, str]:
        return {m.payload_type: m.codec_name for m in self.payload_map}


@dataclass(frozen=True)
class InitialBody:
    meta: CallMeta

    kind = Kind.INITIAL


@dataclass(frozen=True)
class VoiceBody:
    prev_hash: HashDigest
    index: int
    time: int
    direction: Direction
    abs_seqs: tuple[int, ...]
    packets: tuple[bytes, ...]

    kind = Kind.VOICE


@dataclass(frozen=True)
class FinalBody:
    prev_hash: HashDigest
    time: int
    reason: TerminationReason
    last_flag: bool = True

    kind = Kind.FINAL


IntervalBody = Union[InitialBody, VoiceBody, FinalBody]


def _text(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("!H", len(raw)) + raw


def encode_body(body: IntervalBody) -> bytes:
    if isinstance(body, InitialBody):
        m = body.meta
        out = [m.nonce, struct.pack("!Q", m.start_time), _text(m.from_uri), _text(m.to_uri)]
        out.append(struct.pack("!B", len(m.payload_map)))
        for pm in m.payload_map:
            out.append(struct.pack("!B", pm.payload_type) + _text(pm.codec_name))
            out.append(struct.pack("!IB", pm.clock_rate, pm.channels))
        return b"".join(out)
    if isinstance(body, VoiceBody):
        if len(body.abs_seqs) != len(body.packets):
            raise ValueError("abs_seqs and packets differ in length")
        if any(b <= a for a, b in zip(body.abs_seqs, body.abs_seqs[1:])):
            raise ValueError("abs_seqs must be strictly increasing")
        n = len(body.packets)
        head = body.prev_hash.value + struct.pack(
            "!IQBH", body.index, body.time, int(body.direction), n
        )
        seqs = struct.pack(f"!{n}Q", *body.abs_seqs)
        pkts = b"".join(struct.pack("!H", len(p)) + p for p in body.packets)
        return head + seqs + pkts
    if isinstance(body, FinalBody):
        return body.prev_hash.value + struct.pack("!BQB", 1, body.time, int(body.reason))
    raise TypeError(f"not an interval body: {body!r}")


class _BodyReader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise Malformed("body truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def text(self) -> str:
        (n,) = self.unpack("!H")
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError:
            raise Malformed("text field is not UTF-8") from None

    def done(self) -> None:
        if self.pos != len(self.data):
            raise Malformed("trailing bytes in body")


def decode_body(kind: Kind, data: bytes) -> IntervalBody:
    r = _BodyReader(bytes(data))
    kind = Kind(kind)
    if kind == Kind.INITIAL:
        nonce = r.take(16)
        (start,) = r.unpack("!Q")
        from_uri, to_uri = r.text(), r.text()
        (count,) = r.unpack("!B")
        mapping = []
        for _ in range(count):
            (pt,) = r.unpack("!B")
            name = r.text()
            rate, channels = r.unpack("!IB")
            if pt > 127:
                raise Malformed(f"payload type {pt} out of range")
            mapping.append(PayloadMapping(pt, name, rate, channels))
        r.done()
        try:
            return InitialBody(CallMeta(nonce, start, from_uri, to_uri, tuple(mapping)))
        except ValueError as exc:
            raise Malformed(str(exc)) from None
    if kind == Kind.VOICE:
        prev = HashDigest(r.take(HASH_LEN))
        index, time, direction, n = r.unpack("!IQBH")
        if direction > 1:
            raise Malformed(f"bad direction {direction}")
        seqs = r.unpack(f"!{n}Q")
        if any(b <= a for a, b in zip(seqs, seqs[1:])):
            raise Malformed("abs_seqs not strictly increasing")
        packets = []
        for _ in range(n):
            (plen,) = r.unpack("!H")
            packets.append(r.take(plen))
        r.done()
        return VoiceBody(prev, index, time, Direction(direction), tuple(seqs), tuple(packets))
    prev = HashDigest(r.take(HASH_LEN))
    flag, time, reason = r.unpack("!BQB")
    r.done()
    if flag != 1:
        raise Malformed("final interval without last flag")
    try:
        return FinalBody(prev, time, TerminationReason(reason))
    except ValueError:
        raise Malformed(f"unknown termination reason {reason}") from None


# --- SDP -----------------------------------------------------------------

class SdpError(ValueError):
    pass


class DuplicatePayloadType(SdpError):
    pass


class MalformedRtpmap(SdpError):
    pass


_RTPMAP = re.compile(r"a=rtpmap:(\d+)\s+([^/\s]+)/(\d+)(?:/(\d+))?\s*$")


def parse_sdp_rtpmap(sdp_text: str) -> list[PayloadMapping]:
    """Collect ``a=rtpmap`` attributes from an SDP body."""
    mapping: list[PayloadMapping] = []
    seen: set[int] = set()
    for line in sdp_text.splitlines():
        line = line.strip()
        if not line.startswith("a=rtpmap:"):
            continue
        m = _RTPMAP.match(line)
        if not m or int(m.group(1)) > 127:
            raise MalformedRtpmap(line)
        pt = int(m.group(1))
        if pt in seen:
            raise DuplicatePayloadType(f"payload type {pt} mapped twice")
        seen.add(pt)
        channels = int(m.group(4)) if m.group(4) else 1
        mapping.append(PayloadMapping(pt, m.group(2), int(m.group(3)), channels))
    return mapping


# --- chunker -------------------------------------------------------------

class Flush(NamedTuple):
    direction: Direction
    time: int
    abs_seqs: tuple[int, ...]
    packets: tuple[bytes, ...]


@dataclass
class _Buffer:
    seqs: list[int] = field(default_factory=list)
    packets: list[bytes] = field(default_factory=list)
    newest_arrival: Optional[int] = None
    last_flushed: int = -1

    @property
    def nbytes(self) -> int:
        return sum(len(p) for p in self.packets)


class Chunker:
    """Groups accepted packets of both directions into time windows.

    A single window clock is shared by both directions and starts at the
    first pushed packet. When a window closes both directions flush, the
    silent one as an empty interval, so consecutive same-direction runs
    never exceed one. Interval time is the window's open time.
    """

    def __init__(self, interval_duration: int = DEFAULT_INTERVAL_US):
        if interval_duration <= 0:
            raise ValueError("interval duration must be positive")
        self.interval_duration = interval_duration
        self.window_open: Optional[int] = None
        self.buffers = {d: _Buffer() for d in Direction}
        self.last_emitted: Optional[Direction] = None
        self.late_drops = 0
        self.peak_packets = 0
        self.peak_bytes = 0
        self.peak_span = 0

    def push(self, direction: Direction, abs_seq: int, packet: bytes, now: int) -> list[Flush]:
        """Add a packet; returns intervals whose windows closed at ``now``.

        A packet whose window has already been flushed is dropped and
        counted in ``late_drops``.
        """
        direction = Direction(direction)
        flushes = self.tick(now) if self.window_open is not None else []
        if self.window_open is None:
            self.window_open = now
        buf = self.buffers[direction]
        if abs_seq <= buf.last_flushed or abs_seq in buf.seqs:
            self.late_drops += 1
            return flushes
        i = bisect.bisect_left(buf.seqs, abs_seq)
        buf.seqs.insert(i, abs_seq)
        buf.packets.insert(i, bytes(packet))
        buf.newest_arrival = now
        self._record_peak()
        return flushes

    def accepts(self, direction: Direction, abs_seq: int) -> bool:
        buf = self.buffers[Direction(direction)]
        return abs_seq > buf.last_flushed and abs_seq not in buf.seqs

    def tick(self, now: int) -> list[Flush]:
        out: list[Flush] = []
        if self.window_open is None:
            return out
        while now >= self.window_open + self.interval_duration:
            out.extend(self._flush_window())
            self.window_open += self.interval_duration
        return out

    def drain(self) -> list[Flush]:
        """Flush the open window if it holds packets (normal hangup)."""
        if self.window_open is None or not self.buffered_packets:
            return []
        return self._flush_window()

    def discard(self) -> int:
        dropped = self.buffered_packets
        for buf in self.buffers.values():
            buf.seqs.clear()
            buf.packets.clear()
            buf.newest_arrival = None
        return dropped

    @property
    def buffered_packets(self) -> int:
        return sum(len(b.seqs) for b in self.buffers.values())

    @property
    def buffered_bytes(self) -> int:
        return sum(b.nbytes for b in self.buffers.values())

    def _flush_window(self) -> list[Flush]:
        assert self.window_open is not None
        first = Direction.A_TO_B if self.last_emitted is None else self.last_emitted.other
        out = []
        for d in (first, first.other):
            buf = self.buffers[d]
            out.append(Flush(d, self.window_open, tuple(buf.seqs), tuple(buf.packets)))
            if buf.seqs:
                buf.last_flushed = buf.seqs[-1]
            buf.seqs, buf.packets, buf.newest_arrival = [], [], None
        self.last_emitted = first.other
        return out

    def _record_peak(self) -> None:
        assert self.window_open is not None
        self.peak_packets = max(self.peak_packets, self.buffered_packets)
        self.peak_bytes = max(self.peak_bytes, self.buffered_bytes)
        span = sum(
            b.newest_arrival - self.window_open
            for b in self.buffers.values()
            if b.newest_arrival is not None
        )
        self.peak_span = max(self.peak_span, span)


# --- chain verification ---------------------------------------------------

class ChainError(ValueError):
    pass


class ChainBroken(ChainError):
    pass


class TimeRegression(ChainError):
    pass


class InterleaveViolation(ChainError):
    pass


class IndexGap(ChainError):
    pass


class AlreadyFinished(ChainError):
    pass


@dataclass(frozen=True)
class ChainState:
    prev_hash: Optional[HashDigest] = None
    last_time: int = 0
    same_direction_run: int = 0
    last_direction: Optional[Direction] = None
    next_index: int = 1
    finished: bool = False

    @property
    def started(self) -> bool:
        return self.prev_hash is not None


def chain_step(
    state: ChainState, encoded_envelope: bytes, envelope: Envelope, body: IntervalBody
) -> ChainState:
    """Validate one signature-checked envelope against the chain state."""
    if state.finished:
        raise AlreadyFinished("interval after the final interval")
    new_hash = envelope_hash(encoded_envelope)
    if isinstance(body, InitialBody):
        if state.started:
            raise ChainBroken("initial interval inside a running chain")
        return ChainState(prev_hash=new_hash, last_time=body.meta.start_time)
    if not state.started:
        raise ChainBroken("chain does not start with an initial interval")
    if body.prev_hash != state.prev_hash:
        raise ChainBroken("embedded hash does not match the previous interval")
    if body.time < state.last_time:
        raise TimeRegression(f"interval time {body.time} before {state.last_time}")
    if isinstance(body, FinalBody):
        return replace(state, prev_hash=new_hash, last_time=body.time, finished=True)
    if body.index != state.next_index:
        raise IndexGap(f"expected index {state.next_index}, got {body.index}")
    run = state.same_direction_run + 1 if body.direction == state.last_direction else 1
    if run > MAX_SAME_DIRECTION_RUN:
        raise InterleaveViolation(
            f"{run} consecutive intervals in direction {body.direction.name}"
        )
    return replace(
        state,
        prev_hash=new_hash,
        last_time=body.time,
        same_direction_run=run,
        last_direction=body.direction,
        next_index=state.next_index + 1,
    )


def interval_body(envelope: Envelope) -> IntervalBody:
    return decode_body(envelope.kind, envelope.body)


def payload_map_from(entries: Sequence[Sequence]) -> tuple[PayloadMapping, ...]:
    return tuple(PayloadMapping(*e) for e in entries)
