import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voicearc.rtp import (
    BadVersion,
    ReplayWindow,
    RtpPacket,
    TooShort,
    Verdict,
    extend_nearest,
    parse_rtp,
    serialize_rtp,
)

MINIMAL = bytes([0x80, 0x00, 0x00, 0x05, 0, 0, 0, 0, 0, 0, 0, 1])


def pkt(seq, ts=0, pt=0):
    return RtpPacket.build(pt, seq, ts, 0x1234)


def test_parse_minimal_header():
    p = parse_rtp(MINIMAL)
    assert (p.version, p.payload_type, p.seq16, p.ssrc, p.payload) == (2, 0, 5, 1, b"")
    assert p.csrc_list == () and not p.marker and not p.padding_flag


def test_bad_version():
    with pytest.raises(BadVersion):
        parse_rtp(bytes([0x40]) + MINIMAL[1:])


def test_csrc_count_beyond_buffer():
    data = bytes([0x82]) + MINIMAL[1:] + b"\x00" * 4
    assert len(data) == 16
    with pytest.raises(TooShort):
        parse_rtp(data)


def test_shorter_than_header():
    with pytest.raises(TooShort):
        parse_rtp(MINIMAL[:11])


def test_serialize_round_trip_and_lengths():
    assert serialize_rtp(parse_rtp(MINIMAL)) == MINIMAL
    assert len(serialize_rtp(RtpPacket.build(0, 1, 2, 3, bytes(160)))) == 172
    assert len(serialize_rtp(RtpPacket.build(0, 1, 2, 3, b"abcd", csrc_list=(7, 8)))) == 24


@settings(max_examples=10_000, deadline=None)
@given(
    pt=st.integers(0, 127),
    seq=st.integers(0, 0xFFFF),
    ts=st.integers(0, 0xFFFFFFFF),
    ssrc=st.integers(0, 0xFFFFFFFF),
    marker=st.booleans(),
    csrcs=st.lists(st.integers(0, 0xFFFFFFFF), max_size=15),
    payload=st.binary(max_size=64),
)
def test_build_parse_round_trip(pt, seq, ts, ssrc, marker, csrcs, payload):
    p = RtpPacket.build(pt, seq, ts, ssrc, payload, marker, tuple(csrcs))
    q = parse_rtp(serialize_rtp(p))
    assert q == p
    assert (q.payload_type, q.seq16, q.ts32, q.ssrc, q.marker) == (pt, seq, ts, ssrc, marker)
    assert q.csrc_list == tuple(csrcs) and q.payload == payload


@given(st.binary(max_size=40))
def test_parse_never_raises_unexpected(data):
    try:
        p = parse_rtp(data)
    except (TooShort, BadVersion):
        return
    assert serialize_rtp(p) == data


def test_extend_nearest():
    assert extend_nearest(0, 0xFFFF, 1 << 16) == 0x10000
    assert extend_nearest(0xFFFF, 0x10000, 1 << 16) == 0xFFFF
    assert extend_nearest(5, 5, 1 << 16) == 5
    assert extend_nearest(0x8000, 0, 1 << 16) == 0x8000  # tie goes forward


@given(st.integers(0, 1 << 40), st.integers(-32767, 32767))
def test_extend_nearest_recovers_offsets(ref, delta):
    assert extend_nearest((ref + delta) % (1 << 16), ref, 1 << 16) == ref + delta


def test_window_first_packet_is_zero():
    w = ReplayWindow()
    assert w.accept(pkt(0xFFF0), 0) == (Verdict.ACCEPT, 0)
    assert w.accept(pkt(0xFFF1), 0) == (Verdict.ACCEPT, 1)


def test_window_rollover():
    w = ReplayWindow()
    assert w.accept(pkt(0xFFFF), 0).abs_seq == 0
    assert w.accept(pkt(0x0000), 0) == (Verdict.ACCEPT, 1)


def test_window_duplicate_is_replay():
    w = ReplayWindow()
    w.accept(pkt(10), 0)
    assert w.accept(pkt(10), 0).verdict is Verdict.REPLAY


def test_window_late_packets():
    w = ReplayWindow()
    for s in range(100, 140):
        w.accept(pkt(s), 0)
    assert w.accept(pkt(108), 0).verdict is Verdict.REPLAY  # 31 below: inside but seen
    assert w.accept(pkt(107), 0).verdict is Verdict.REPLAY  # 32 below: outside window
    w2 = ReplayWindow()
    w2.accept(pkt(100), 0)
    w2.accept(pkt(131), 0)
    assert w2.accept(pkt(100 + 1), 0) == (Verdict.ACCEPT, 1)
    assert w2.accept(pkt(99), 0).verdict is Verdict.REPLAY  # before the first packet


def test_window_out_of_order_within_window():
    w = ReplayWindow()
    w.accept(pkt(1), 0)
    assert w.accept(pkt(5), 0).abs_seq == 4
    assert w.accept(pkt(3), 0).abs_seq == 2
    assert w.accept(pkt(3), 0).verdict is Verdict.REPLAY


def test_window_media_time_drift():
    w = ReplayWindow(drift_bound_us=2_000_000, clock_rates={0: 8000})
    assert w.accept(pkt(1, ts=1000), 0).verdict is Verdict.ACCEPT
    # 8000 ticks = 1 s of media against 1 s of wallclock.
    assert w.accept(pkt(2, ts=9000), 1_000_000).verdict is Verdict.ACCEPT
    # Media claims 1 s, wallclock says 3.5 s.
    assert w.accept(pkt(3, ts=9160), 3_500_000).verdict is Verdict.INCONSISTENT
    # Payload types without a known rate are not checked.
    assert w.accept(pkt(4, ts=9160, pt=99), 3_500_000).verdict is Verdict.ACCEPT


@settings(max_examples=300, deadline=None)
@given(start=st.integers(0, 0xFFFF), perm=st.permutations(list(range(32))))
def test_window_accepts_permutation_starting_lowest(start, perm):
    # Any arrival order within the 32-packet window is accepted exactly once,
    # as long as the lowest packet arrives first and fixes the base.
    order = [0] + [i for i in perm if i != 0]
    w = ReplayWindow()
    got = {}
    for i in order:
        d = w.accept(pkt((start + i) & 0xFFFF), 0)
        assert d.verdict is Verdict.ACCEPT
        got[i] = d.abs_seq
    assert got == {i: i for i in range(32)}
    for i in order:
        assert w.accept(pkt((start + i) & 0xFFFF), 0).verdict is Verdict.REPLAY


def test_raw_bytes_preserved_with_extension_flag():
    raw = bytes([0x90, 0x00]) + struct.pack("!HII", 7, 8, 9) + b"\xbe\xde\x00\x00"
    p = parse_rtp(raw)
    assert p.extension_flag and serialize_rtp(p) == raw
