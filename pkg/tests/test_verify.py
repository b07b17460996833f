import warnings

import pytest

from voicearc.arc import CheckCode, frame_records
from voicearc.chain import Direction, TerminationReason
from voicearc.envelope import TimestampAuthority
from voicearc.harness import CaptureTransport, ManualClock, TrafficProfile, rechain
from voicearc.rtp import RtpPacket
from voicearc.verify import (
    UnknownPayloadType,
    VerificationStatus,
    extract_streams,
    format_listing,
    verify_archive,
)
from voicearc.vsec import new_call_meta, start_session

from conftest import record

A, B = Direction.A_TO_B, Direction.B_TO_A


def check(pki, frames, **kw):
    return verify_archive(frame_records(frames), pki.root, [pki.tsa.leaf], **kw)


def test_complete(pki, clean_call):
    r = check(pki, clean_call.encoded)
    assert r.status is VerificationStatus.COMPLETE_VERIFIED and r.status.exit_code == 0
    assert r.summary.reason is TerminationReason.HANGUP_A
    assert r.summary.interval_count == len(clean_call.encoded)
    assert r.summary.nonce == clean_call.session.meta.nonce


def test_missing_final_is_incomplete(pki, clean_call):
    r = check(pki, clean_call.encoded[:-1])
    assert r.status is VerificationStatus.INCOMPLETE_PREFIX_VERIFIED and r.status.exit_code == 2


def test_torn_tail_is_incomplete(pki, clean_call):
    data = frame_records(clean_call.encoded)[:-7]
    r = verify_archive(data, pki.root, [pki.tsa.leaf])
    assert r.status is VerificationStatus.INCOMPLETE_PREFIX_VERIFIED and r.torn_tail


def test_swapped_intervals(pki, clean_call):
    f = list(clean_call.encoded)
    f[4], f[5] = f[5], f[4]
    r = check(pki, f)
    assert (r.status, r.position, r.check) == (VerificationStatus.REJECTED, 5, CheckCode.CHAIN)
    assert r.status.exit_code == 1


def test_reused_nonce_needs_archive_context(pki, clean_call):
    known = {clean_call.session.meta.nonce}
    r = check(pki, clean_call.encoded, known_nonces=known)
    assert (r.position, r.check) == (1, CheckCode.NONCE)


def test_extract_counts(pki):
    drops = tuple((B, i) for i in range(80, 100))
    rec = record(pki, TrafficProfile(duration_s=2.0, drops=drops))
    ex = extract_streams(frame_records(rec.encoded))
    assert len(ex.channels[A]) == 100 and len(ex.channels[B]) == 80
    assert [p.abs_seq for p in ex.channels[A]] == list(range(100))
    assert ex.channels[A][0].codec == "PCMU" and len(ex.channels[A][0].payload) == 160


def test_extract_dynamic_payload_name(pki):
    rec = record(pki, TrafficProfile(duration_s=1.0, payload_type=96, codec="opus", clock_rate=48000))
    ex = extract_streams(frame_records(rec.encoded))
    assert {p.codec for ch in ex.channels.values() for p in ch} == {"opus"}
    assert check(pki, rec.encoded).ok


def test_extract_unknown_payload_type(pki):
    clock = ManualClock()
    transport = CaptureTransport(clock)
    meta = new_call_meta("sip:a", "sip:b", [(96, "opus", 48000, 2)])
    s = start_session(meta, pki.recorder, TimestampAuthority(pki.tsa, clock), transport, clock.now)
    s.ingest_packet(A, RtpPacket.build(97, 1, 0, 5, b"x").raw_bytes, clock.now)
    s.close(TerminationReason.HANGUP_A, clock.now + 10)
    with pytest.warns(UnknownPayloadType):
        ex = extract_streams(frame_records(f for _, f in transport.frames))
    assert ex.channels[A][0].codec == "97" and ex.warnings


def test_listing(pki, clean_call):
    empty = verify_archive(b"", pki.root, [pki.tsa.leaf])
    text = format_listing(empty)
    assert text.splitlines()[0].startswith("status:") and len(text.splitlines()) == 2
    one_packet = record(pki, TrafficProfile(duration_s=0.02, directions=(A,)))
    # Drop the empty partner interval to get Initial, Voice, Final.
    three = rechain(one_packet.encoded, pki.recorder, lambda bs: [b for b in bs if getattr(b, "packets", 1)])
    assert len(three) == 3
    r = check(pki, three)
    kinds = [row.kind.name for row in r.rows]
    assert len(r.rows) == 3 and kinds[0] == "INITIAL" and kinds[-1] == "FINAL"
    f = list(clean_call.encoded)
    f[4], f[5] = f[5], f[4]
    lines = format_listing(check(pki, f)).splitlines()
    assert "rejected at: 5 (CHAIN)" in lines[0]
    assert "FAIL CHAIN" in lines[2 + 4] and lines[2 + 5].endswith("unchecked")


def test_offline_drift_check_not_applicable(pki, clean_call):
    r = check(pki, clean_call.encoded)
    from voicearc.arc import Status

    assert all(rep.results[CheckCode.CHK5].status is Status.NOT_APPLICABLE for rep in r.reports)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        extract_streams(frame_records(clean_call.encoded))
