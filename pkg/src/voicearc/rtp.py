"""RTP packet parsing, sequence-number extension and replay protection."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Optional

RTP_VERSION = 2
HEADER_LEN = 12
SEQ_MOD = 1 << 16
TS_MOD = 1 << 32
WINDOW_SIZE = 32

_HEADER = struct.Struct("!BBHII")


class RtpError(ValueError):
    """Datagram is not a usable RTP packet."""


class TooShort(RtpError):
    pass


class BadVersion(RtpError):
    pass


@dataclass(frozen=True)
class RtpPacket:
    version: int
    padding_flag: bool
    marker: bool
    payload_type: int
    seq16: int
    ts32: int
    ssrc: int
    csrc_list: tuple[int, ...]
    payload: bytes
    raw_bytes: bytes
    extension_flag: bool = False

    @classmethod
    def build(
        cls,
        payload_type: int,
        seq16: int,
        ts32: int,
        ssrc: int,
        payload: bytes = b"",
        marker: bool = False,
        csrc_list: tuple[int, ...] = (),
    ) -> "RtpPacket":
        """Assemble a packet without padding or header extension."""
        if len(csrc_list) > 15:
            raise ValueError("at most 15 CSRC entries")
        b0 = (RTP_VERSION << 6) | len(csrc_list)
        b1 = (0x80 if marker else 0) | (payload_type & 0x7F)
        raw = _HEADER.pack(b0, b1, seq16 & 0xFFFF, ts32 & 0xFFFFFFFF, ssrc & 0xFFFFFFFF)
        raw += b"".join(struct.pack("!I", c) for c in csrc_list) + bytes(payload)
        return parse_rtp(raw)


def parse_rtp(data: bytes) -> RtpPacket:
    data = bytes(data)
    if len(data) < HEADER_LEN:
        raise TooShort(f"{len(data)} bytes, need at least {HEADER_LEN}")
    b0, b1, seq, ts, ssrc = _HEADER.unpack_from(data)
    version = b0 >> 6
    if version != RTP_VERSION:
        raise BadVersion(f"RTP version {version}")
    cc = b0 & 0x0F
    need = HEADER_LEN + 4 * cc
    if len(data) < need:
        raise TooShort(f"{len(data)} bytes, CC={cc} needs {need}")
    csrcs = struct.unpack_from(f"!{cc}I", data, HEADER_LEN)
    # Header extension and padding stay inside the payload bytes, uninterpreted.
    return RtpPacket(
        version=version,
        padding_flag=bool(b0 & 0x20),
        marker=bool(b1 & 0x80),
        payload_type=b1 & 0x7F,
        seq16=seq,
        ts32=ts,
        ssrc=ssrc,
        csrc_list=tuple(csrcs),
        payload=data[need:],
        raw_bytes=data,
        extension_flag=bool(b0 & 0x10),
    )


def serialize_rtp(packet: RtpPacket) -> bytes:
    return packet.raw_bytes


def extend_nearest(value: int, reference: int, modulus: int) -> int:
    """Return the integer congruent to ``value`` mod ``modulus`` nearest ``reference``.

    Ties (exactly half a cycle away) resolve forward.
    """
    half = modulus // 2
    delta = (value - reference + half) % modulus - half
    if delta == -half:
        delta = half
    return reference + delta


class Verdict(enum.Enum):
    ACCEPT = "accept"
    REPLAY = "replay"
    INCONSISTENT = "inconsistent"


class Decision(NamedTuple):
    verdict: Verdict
    abs_seq: Optional[int] = None


# Extended counters start one cycle up so early backward steps never go negative.
_EXT_OFFSET = SEQ_MOD
_TS_OFFSET = TS_MOD


@dataclass
class ReplayWindow:
    """32-entry sliding window over extended sequence numbers of one channel.

    ``clock_rates`` maps payload type to media clock rate in Hz; packets
    whose type is absent skip the media-time drift check.
    """

    drift_bound_us: int = 2_000_000
    clock_rates: Mapping[int, int] = field(default_factory=dict)
    base_ext_seq: Optional[int] = None
    highest_ext_seq: Optional[int] = None
    window_bits: int = 0
    first_ts32: Optional[int] = None
    first_wallclock: int = 0
    _first_ext_ts: int = 0
    _last_ext_ts: int = 0

    def accept(self, packet: RtpPacket, now: int) -> Decision:
        return window_accept(self, packet, now)


def window_accept(window: ReplayWindow, packet: RtpPacket, now: int) -> Decision:
    if window.highest_ext_seq is None:
        ext = _EXT_OFFSET + packet.seq16
        window.base_ext_seq = window.highest_ext_seq = ext
        window.window_bits = 1
        window.first_ts32 = packet.ts32
        window.first_wallclock = now
        window._first_ext_ts = window._last_ext_ts = _TS_OFFSET + packet.ts32
        return Decision(Verdict.ACCEPT, 0)

    ext = extend_nearest(packet.seq16, window.highest_ext_seq, SEQ_MOD)
    assert window.base_ext_seq is not None
    if ext < window.base_ext_seq:
        # Precedes the first recorded packet; no absolute number exists for it.
        return Decision(Verdict.REPLAY)
    below = window.highest_ext_seq - ext
    if below > WINDOW_SIZE - 1:
        return Decision(Verdict.REPLAY)
    if below >= 0 and window.window_bits >> below & 1:
        return Decision(Verdict.REPLAY)

    ext_ts = extend_nearest(packet.ts32, window._last_ext_ts, TS_MOD)
    rate = window.clock_rates.get(packet.payload_type)
    if rate:
        media_us = (ext_ts - window._first_ext_ts) * 1_000_000 // rate
        wall_us = now - window.first_wallclock
        if abs(wall_us - media_us) > window.drift_bound_us:
            return Decision(Verdict.INCONSISTENT)

    if below < 0:
        shift = -below
        bits = (window.window_bits << shift) if shift < WINDOW_SIZE else 0
        window.window_bits = (bits | 1) & 0xFFFFFFFF
        window.highest_ext_seq = ext
    else:
        window.window_bits |= 1 << below
    if ext_ts > window._last_ext_ts:
        window._last_ext_ts = ext_ts
    return Decision(Verdict.ACCEPT, ext - window.base_ext_seq)
