import math

import pytest

from voicearc.arc import CheckCode
from voicearc.chain import Direction, TerminationReason
from voicearc.harness import (
    SCENARIOS,
    Attack,
    AttackKind,
    HarnessConfigError,
    Scenario,
    TrafficProfile,
    generate_call,
    read_capture,
    run_all,
    run_scenario,
    write_capture,
)
from voicearc.rtp import parse_rtp
from voicearc.verify import VerificationStatus

A, B = Direction.A_TO_B, Direction.B_TO_A
# Checks only the live archive can make: arrival clock, its own disk.
ARC_ONLY = {CheckCode.CHK3, CheckCode.CHK5, CheckCode.STORAGE}


def test_packet_counts_and_spacing():
    call = generate_call(TrafficProfile(duration_s=2.0), seed=1)
    for d in Direction:
        tl = call.timeline(d)
        assert len(tl) == 100
        assert all(b.time - a.time == 20_000 for a, b in zip(tl, tl[1:]))
        seqs = [parse_rtp(e.datagram).seq16 for e in tl]
        assert all((b - a) % 65536 == 1 for a, b in zip(seqs, seqs[1:]))
        ts = [parse_rtp(e.datagram).ts32 for e in tl]
        assert all((b - a) % 2**32 == 160 for a, b in zip(ts, ts[1:]))


def test_same_seed_same_call():
    assert generate_call(TrafficProfile(), 5).events == generate_call(TrafficProfile(), 5).events
    assert generate_call(TrafficProfile(), 5).events != generate_call(TrafficProfile(), 6).events


def test_sequence_numbers_start_randomly():
    starts = {parse_rtp(generate_call(TrafficProfile(duration_s=0.1), s).events[0].datagram).seq16 for s in range(20)}
    assert len(starts) > 15


def test_loss_injection_records_delivered_set():
    profile = TrafficProfile(duration_s=20.0, loss=0.02, directions=(A,))
    call = generate_call(profile, 11)
    n = len(call.delivered[A])
    assert call.sent[A] == 1000
    assert n == len(call.events) == len(call.timeline(A))
    assert abs(n - 980) <= 4 * math.sqrt(1000 * 0.02 * 0.98)
    assert {e.index for e in call.events} == call.delivered[A]


def test_capture_round_trip():
    call = generate_call(TrafficProfile(duration_s=1.0, jitter_us=2000), 2)
    records = read_capture(write_capture(call))
    assert [(d, off + call.start_time, raw) for d, off, raw in records] == [
        (e.direction, e.time, e.datagram) for e in call.events
    ]
    with pytest.raises(ValueError):
        read_capture(write_capture(call)[:-1])


def test_bad_profiles():
    with pytest.raises(HarnessConfigError):
        generate_call(TrafficProfile(duration_s=0), 0)
    with pytest.raises(HarnessConfigError):
        generate_call(TrafficProfile(loss=1.0), 0)
    with pytest.raises(HarnessConfigError):
        run_scenario(Scenario("x", attack=Attack(AttackKind.BIT_FLIP, n=99)))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_every_scenario_as_expected(seed):
    outcomes = run_all(seed)
    bad = [o.line() for o in outcomes if not o.passed]
    assert not bad, "\n".join(bad)


def test_offline_verifier_agrees_with_archive():
    for o in run_all(4):
        a = o.actual
        if a.status == "rejected" and a.code in ARC_ONLY:
            continue
        if a.status == "rejected":
            assert o.offline_status is VerificationStatus.REJECTED, o.line()
            assert o.offline_code == a.code, o.line()
        elif a.status == "complete":
            assert o.offline_status is VerificationStatus.COMPLETE_VERIFIED, o.line()
        else:
            assert o.offline_status is VerificationStatus.INCOMPLETE_PREFIX_VERIFIED, o.line()


def test_scenarios_cover_every_reject_code():
    codes = {o.actual.code for o in run_all(0) if o.actual.code is not None}
    assert codes == set(CheckCode)


def test_deterministic_archive_bytes():
    a = run_scenario(SCENARIOS["clean"], 9)
    b = run_scenario(SCENARIOS["clean"], 9)
    assert a.archive_bytes and a.archive_bytes == b.archive_bytes


def test_drop_interval_three_on_ten_interval_call():
    s = Scenario("d3", TrafficProfile(duration_s=4.0), Attack(AttackKind.DROP_INTERVAL, n=3))
    o = run_scenario(s, 0)
    assert o.frames == 9  # ten frames with one removed
    assert o.actual.code is CheckCode.CHAIN and o.actual.origin == 4 and o.actual.position == 3


def test_excess_loss_archived_with_reason():
    o = run_scenario(SCENARIOS["excess-loss"], 0)
    assert o.actual.status == "complete" and o.offline_status is VerificationStatus.COMPLETE_VERIFIED
    assert o.reason is TerminationReason.QOS_VIOLATION


def test_parallel_matches_sequential():
    names = ["clean", "reorder", "mitm-continue"]
    seq = [o.line() for o in run_all(1, names)]
    par = [o.line() for o in run_all(1, names, parallel=True)]
    assert seq == par
