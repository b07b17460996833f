import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from voicearc.chain import (
    AlreadyFinished,
    CallMeta,
    ChainBroken,
    ChainState,
    Chunker,
    Direction,
    DuplicatePayloadType,
    FinalBody,
    IndexGap,
    InitialBody,
    InterleaveViolation,
    MalformedRtpmap,
    PayloadMapping,
    TerminationReason,
    TimeRegression,
    VoiceBody,
    chain_step,
    decode_body,
    encode_body,
    parse_sdp_rtpmap,
)
from voicearc.envelope import (
    HashDigest,
    Kind,
    Malformed,
    attach_token,
    decode_envelope,
    encode_envelope,
    envelope_hash,
    sign_envelope,
    tsa_issue,
)

A, B = Direction.A_TO_B, Direction.B_TO_A
ZERO = HashDigest(bytes(32))

hashes = st.binary(min_size=32, max_size=32).map(HashDigest)


def test_empty_voice_body_is_47_bytes():
    body = VoiceBody(ZERO, 1, 0, A, (), ())
    assert len(encode_body(body)) == 32 + 4 + 8 + 1 + 2 == 47
    assert decode_body(Kind.VOICE, encode_body(body)) == body


def test_final_body_layout():
    body = FinalBody(ZERO, 5, TerminationReason.QOS_VIOLATION)
    enc = encode_body(body)
    assert len(enc) == 42 and enc[32] == 1 and enc[-1] == 3
    assert decode_body(Kind.FINAL, enc) == body


@st.composite
def voice_bodies(draw):
    seqs = sorted(draw(st.sets(st.integers(0, 2**64 - 1), max_size=8)))
    pkts = [draw(st.binary(max_size=40)) for _ in seqs]
    return VoiceBody(
        draw(hashes),
        draw(st.integers(1, 2**32 - 1)),
        draw(st.integers(0, 2**64 - 1)),
        draw(st.sampled_from(Direction)),
        tuple(seqs),
        tuple(pkts),
    )


@st.composite
def initial_bodies(draw):
    pts = draw(st.lists(st.integers(0, 127), unique=True, max_size=4))
    mapping = tuple(
        PayloadMapping(pt, draw(st.text(max_size=8)), draw(st.integers(1, 2**32 - 1)), draw(st.integers(1, 8)))
        for pt in pts
    )
    meta = CallMeta(
        draw(st.binary(min_size=16, max_size=16)),
        draw(st.integers(0, 2**64 - 1)),
        draw(st.text(max_size=20)),
        draw(st.text(max_size=20)),
        mapping,
    )
    return InitialBody(meta)


@settings(suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
@given(st.one_of(voice_bodies(), initial_bodies()))
def test_body_round_trip(body):
    assert decode_body(body.kind, encode_body(body)) == body


def test_non_increasing_abs_seqs_are_malformed():
    good = encode_body(VoiceBody(ZERO, 1, 0, A, (1, 2), (b"a", b"b")))
    swapped = good[:47] + (2).to_bytes(8, "big") + (1).to_bytes(8, "big") + good[63:]
    with pytest.raises(Malformed):
        decode_body(Kind.VOICE, swapped)
    with pytest.raises(ValueError):
        encode_body(VoiceBody(ZERO, 1, 0, A, (3, 3), (b"a", b"b")))


def test_sdp_rtpmap():
    assert parse_sdp_rtpmap("a=rtpmap:0 PCMU/8000") == [PayloadMapping(0, "PCMU", 8000, 1)]
    assert parse_sdp_rtpmap("v=0\r\na=rtpmap:96 opus/48000/2\r\n") == [
        PayloadMapping(96, "opus", 48000, 2)
    ]
    with pytest.raises(DuplicatePayloadType):
        parse_sdp_rtpmap("a=rtpmap:96 opus/48000/2\na=rtpmap:96 PCMA/8000")
    with pytest.raises(MalformedRtpmap):
        parse_sdp_rtpmap("a=rtpmap:x PCMU/8000")


# --- chunker ---------------------------------------------------------------

def test_one_direction_second_gets_empty_partner():
    c = Chunker(1_000_000)
    for i in range(50):
        assert c.push(A, i, b"p", i * 20_000) == []
    out = c.tick(1_000_000)
    assert [(f.direction, len(f.packets)) for f in out] == [(A, 50), (B, 0)]
    assert all(f.time == 0 for f in out)


def test_idle_chunker_emits_nothing():
    c = Chunker()
    assert c.tick(10_000_000) == [] and c.drain() == []


def test_two_directions_one_second():
    c = Chunker(1_000_000)
    for i in range(50):
        c.push(A, i, b"a", i * 20_000)
        c.push(B, i, b"b", i * 20_000 + 7000)
    out = c.tick(1_000_000)
    assert [(f.direction, len(f.packets)) for f in out] == [(A, 50), (B, 50)]
    for i in range(50):
        c.push(B, 50 + i, b"b", 1_000_000 + i * 20_000)
    # Emission keeps alternating across windows.
    assert [f.direction for f in c.tick(2_000_000)] == [A, B]


def test_late_packet_dropped():
    c = Chunker(1_000_000)
    c.push(A, 5, b"x", 0)
    c.tick(1_000_000)
    assert not c.accepts(A, 4)
    c.push(A, 4, b"late", 1_000_001)
    assert c.late_drops == 1 and c.buffered_packets == 0


events = st.lists(
    st.tuples(st.sampled_from(Direction), st.integers(0, 3), st.integers(0, 400_000)),
    max_size=80,
)


@settings(max_examples=300, deadline=None)
@given(events, st.booleans())
def test_chunker_conservation_and_interleave(evs, discard):
    c = Chunker(1_000_000)
    now = 0
    next_seq = {A: 0, B: 0}
    pushed, flushed = [], []
    for d, skip, dt in evs:
        now += dt
        seq = next_seq[d] + skip
        next_seq[d] = seq + 1
        pkt = f"{d}:{seq}".encode()
        flushed += c.push(d, seq, pkt, now)
        pushed.append((d, seq, pkt))
    flushed += c.tick(now)
    if discard:
        dropped = c.discard()
    else:
        dropped = 0
        flushed += c.drain()
    got = [(f.direction, s, p) for f in flushed for s, p in zip(f.abs_seqs, f.packets)]
    # Nothing lost, nothing duplicated: flushed plus discarded equals pushed.
    assert len(set(got)) == len(got) and set(got) <= set(pushed)
    assert len(got) + dropped == len(pushed)
    run, last = 0, None
    for f in flushed:
        run = run + 1 if f.direction == last else 1
        last = f.direction
        assert run <= 2
        assert list(f.abs_seqs) == sorted(f.abs_seqs)


# --- chain -------------------------------------------------------------------

def build_chain(pki, n_voice=6, final=True):
    meta = CallMeta(bytes(range(16)), 1000, "sip:a", "sip:b", (PayloadMapping(0, "PCMU", 8000),))
    env = sign_envelope(pki.recorder, Kind.INITIAL, encode_body(InitialBody(meta)), True)
    env = attach_token(env, tsa_issue(pki.tsa, b"", 1000))
    frames = [encode_envelope(env)]
    for i in range(1, n_voice + 1):
        body = VoiceBody(envelope_hash(frames[-1]), i, 1000 + i, A if i % 2 else B, (), ())
        frames.append(encode_envelope(sign_envelope(pki.recorder, Kind.VOICE, encode_body(body), False)))
    if final:
        body = FinalBody(envelope_hash(frames[-1]), 5000, TerminationReason.HANGUP_A)
        frames.append(encode_envelope(sign_envelope(pki.recorder, Kind.FINAL, encode_body(body), False)))
    return frames


def run_chain(frames):
    state = ChainState()
    for f in frames:
        env = decode_envelope(f)
        state = chain_step(state, f, env, decode_body(env.kind, env.body))
    return state


def test_chain_accepts_successors(pki):
    frames = build_chain(pki)
    state = run_chain(frames)
    assert state.finished and state.prev_hash == envelope_hash(frames[-1])


def test_chain_rejects_deletion_any_position(pki):
    frames = build_chain(pki)
    for n in range(1, len(frames) - 1):
        with pytest.raises(ChainBroken):
            run_chain(frames[:n] + frames[n + 1 :])


def test_chain_rejects_reorder_and_duplicate(pki):
    frames = build_chain(pki)
    for n in range(1, len(frames) - 1):
        swapped = frames[:n] + [frames[n + 1], frames[n]] + frames[n + 2 :]
        with pytest.raises(ChainBroken):
            run_chain(swapped)
        with pytest.raises((ChainBroken, AlreadyFinished)):
            run_chain(frames[: n + 1] + [frames[n]] + frames[n + 1 :])
    with pytest.raises(AlreadyFinished):
        run_chain(frames + [frames[-1]])


def _voice(pki, prev, index, time, d):
    body = VoiceBody(envelope_hash(prev), index, time, d, (), ())
    return encode_envelope(sign_envelope(pki.recorder, Kind.VOICE, encode_body(body), False))


def test_three_same_direction_intervals(pki):
    frames = build_chain(pki, 0, final=False)
    for i, d in enumerate((A, A, A), start=1):
        frames.append(_voice(pki, frames[-1], i, 1000 + i, d))
    run_chain(frames[:3])
    with pytest.raises(InterleaveViolation):
        run_chain(frames)


def test_time_regression_and_index_gap(pki):
    frames = build_chain(pki, 1, final=False)
    with pytest.raises(TimeRegression):
        run_chain(frames + [_voice(pki, frames[-1], 2, 999, B)])
    with pytest.raises(IndexGap):
        run_chain(frames + [_voice(pki, frames[-1], 3, 2000, B)])
