"""Synthetic calls, the in-process recorder/archive pipeline and attack scenarios.

Every scenario is deterministic given its seed: traffic, nonces, call ids
and keys all derive from seeded generators, and Ed25519 signatures are
deterministic, so archive bytes repeat exactly.
"""

from __future__ import annotations

import enum
import random
import struct
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from .arc import ArcConfig, ArcService, ArchiveStore, CheckCode, frame_records
from .chain import (
    CallMeta,
    Direction,
    InitialBody,
    PayloadMapping,
    TerminationReason,
    VoiceBody,
    decode_body,
    encode_body,
)
from .envelope import (
    Kind,
    TimestampAuthority,
    attach_token,
    decode_envelope,
    encode_envelope,
    envelope_hash,
    sign_envelope,
)
from .pki import SignerIdentity, TestPki, make_test_pki
from .rtp import RtpPacket
from .verify import VerificationStatus, verify_archive
from .vsec import QosPolicy, RecorderConfig, RecorderSession, start_session

START_TIME = 1_750_000_000_000_000  # microseconds since the epoch
B_OFFSET_US = 7_000


class HarnessConfigError(ValueError):
    pass


class ManualClock:
    def __init__(self, now: int = START_TIME):
        self.now = now

    def __call__(self) -> int:
        return self.now


# --- traffic -----------------------------------------------------------------

@dataclass(frozen=True)
class TrafficProfile:
    duration_s: float = 10.0
    packets_per_s: int = 50
    loss: float = 0.0
    jitter_us: int = 0
    payload_bytes: int = 160
    payload_type: int = 0
    codec: str = "PCMU"
    clock_rate: int = 8000
    directions: tuple[Direction, ...] = (Direction.A_TO_B, Direction.B_TO_A)
    # Packet indices (per direction) that never reach the recorder.
    drops: tuple[tuple[Direction, int], ...] = ()

    def packets_per_direction(self) -> int:
        return int(round(self.duration_s * self.packets_per_s))


@dataclass(frozen=True)
class PacketEvent:
    time: int
    direction: Direction
    index: int
    datagram: bytes


@dataclass
class SyntheticCall:
    meta: CallMeta
    start_time: int
    end_time: int
    events: list[PacketEvent]
    sent: dict
    delivered: dict

    def timeline(self, direction: Direction) -> list[PacketEvent]:
        return [e for e in self.events if e.direction == direction]


def generate_call(
    profile: TrafficProfile, seed: int, start_time: int = START_TIME
) -> SyntheticCall:
    """Build both directions' packet timelines for a call.

    Sequence numbers and timestamps start at random values; packets are
    spaced 1/packets_per_s apart with the media clock advancing in step.
    """
    if profile.packets_per_s <= 0 or profile.duration_s <= 0:
        raise HarnessConfigError("duration and packet rate must be positive")
    if not 0 <= profile.loss < 1:
        raise HarnessConfigError("loss must lie in [0, 1)")
    rng = random.Random(f"call:{seed}")
    n = profile.packets_per_direction()
    spacing = 1_000_000 // profile.packets_per_s
    ts_step = profile.clock_rate // profile.packets_per_s
    dropped = set(profile.drops)
    events, sent, delivered = [], {}, {}
    for d in Direction:
        sent[d], delivered[d] = 0, set()
        seq0, ts0, ssrc = rng.randrange(1 << 16), rng.randrange(1 << 32), rng.randrange(1 << 32)
        if d not in profile.directions:
            continue
        offset = 0 if d == Direction.A_TO_B else B_OFFSET_US
        for i in range(n):
            payload = rng.randbytes(profile.payload_bytes)
            jitter = rng.randrange(profile.jitter_us + 1) if profile.jitter_us else 0
            lost = rng.random() < profile.loss
            sent[d] += 1
            if lost or (d, i) in dropped:
                continue
            pkt = RtpPacket.build(
                profile.payload_type, seq0 + i, ts0 + i * ts_step, ssrc, payload, marker=i == 0
            )
            events.append(PacketEvent(start_time + offset + i * spacing + jitter, d, i, pkt.raw_bytes))
            delivered[d].add(i)
    events.sort(key=lambda e: (e.time, e.direction))
    meta = CallMeta(
        nonce=bytes(16),
        start_time=start_time,
        from_uri=f"sip:alice-{seed}@example.org",
        to_uri=f"sip:bob-{seed}@example.net",
        payload_map=(PayloadMapping(profile.payload_type, profile.codec, profile.clock_rate, 1),),
    )
    end = start_time + int(profile.duration_s * 1_000_000)
    return SyntheticCall(meta, start_time, end, events, sent, delivered)


# --- capture files -------------------------------------------------------------

def write_capture(call: SyntheticCall) -> bytes:
    """Encode a call as ``{direction u8, offset_us u64, len u16, rtp}*`` records."""
    out = []
    for e in call.events:
        out.append(struct.pack("!BQH", int(e.direction), e.time - call.start_time, len(e.datagram)))
        out.append(e.datagram)
    return b"".join(out)


def read_capture(data: bytes) -> list[tuple[Direction, int, bytes]]:
    records, pos = [], 0
    while pos < len(data):
        if pos + 11 > len(data):
            raise ValueError("truncated capture record header")
        d, off, n = struct.unpack_from("!BQH", data, pos)
        pos += 11
        if pos + n > len(data):
            raise ValueError("truncated capture record")
        records.append((Direction(d), off, data[pos : pos + n]))
        pos += n
    return records


# --- recording -------------------------------------------------------------------

class CaptureTransport:
    """Collects emitted envelopes with the clock value at emission."""

    def __init__(self, clock: ManualClock):
        self.clock = clock
        self.frames: list[tuple[int, bytes]] = []

    def send(self, encoded: bytes) -> None:
        self.frames.append((self.clock.now, encoded))


@dataclass
class Recording:
    session: RecorderSession
    frames: list[tuple[int, bytes]]
    call: SyntheticCall

    @property
    def encoded(self) -> list[bytes]:
        return [f for _, f in self.frames]


def record_call(
    call: SyntheticCall,
    identity: SignerIdentity,
    tsa: TimestampAuthority,
    clock: ManualClock,
    config: RecorderConfig = RecorderConfig(),
    seed: int = 0,
    hangup: TerminationReason = TerminationReason.HANGUP_A,
    on_packet: Optional[Callable[[RecorderSession], None]] = None,
) -> Recording:
    rng = random.Random(f"session:{seed}:{call.start_time}")
    transport = CaptureTransport(clock)
    clock.now = call.start_time
    session = start_session(
        call.meta,
        identity,
        tsa,
        transport,
        call.start_time,
        config,
        call_id=rng.randbytes(16),
        nonce_source=rng.randbytes,
    )
    for ev in call.events:
        clock.now = ev.time
        session.ingest_packet(ev.direction, ev.datagram, ev.time)
        if on_packet is not None:
            on_packet(session)
        if session.reason is not None:
            break
    if session.reason is None:
        clock.now = call.end_time
        session.close(hangup, call.end_time)
    return Recording(session, transport.frames, call)


@dataclass
class Delivery:
    status: str  # "complete", "incomplete" or "rejected"
    code: Optional[CheckCode] = None
    position: Optional[int] = None
    origin: Optional[int] = None
    detail: str = ""
    reports: list = field(default_factory=list)


def deliver(
    service: ArcService,
    call_id: bytes,
    frames: Sequence[tuple[int, int, bytes]],
    between: Optional[Callable[[int], None]] = None,
) -> Delivery:
    """Feed ``(origin, arrival_time, encoded)`` frames to a fresh archive session."""
    session = service.open_session(call_id)
    reports = []
    for pos, (origin, arrival, encoded) in enumerate(frames, start=1):
        if between is not None:
            between(pos)
        report = session.handle_frame(encoded, arrival)
        reports.append(report)
        if not report.passed:
            code, detail = report.failure
            return Delivery("rejected", code, pos, origin, detail, reports)
    session.connection_closed()
    return Delivery("complete" if session.finished else "incomplete", reports=reports)


# --- forging helpers ------------------------------------------------------------

def rechain(
    frames: Sequence[bytes],
    identity: SignerIdentity,
    transform: Callable[[list], list] = lambda bodies: bodies,
    reindex: bool = True,
) -> list[bytes]:
    """Re-sign a call after ``transform`` rewrites the bodies after the first frame.

    Models a holder of a signing key: the first frame is kept as is and
    every later body is re-linked (and, with ``reindex``, renumbered from 1)
    and re-signed.
    """
    out = [frames[0]]
    bodies = []
    for f in frames[1:]:
        env = decode_envelope(f)
        bodies.append(decode_body(env.kind, env.body))
    index = 1
    for body in transform(bodies):
        prev = envelope_hash(out[-1])
        if isinstance(body, VoiceBody):
            body = replace(body, prev_hash=prev, index=index if reindex else body.index)
            index += 1
        else:
            body = replace(body, prev_hash=prev)
        env = sign_envelope(identity, body.kind, encode_body(body), include_certs=False)
        out.append(encode_envelope(env))
    return out


def resign(encoded: bytes, identity: SignerIdentity, mutate: Callable, token=None) -> bytes:
    """Re-sign one envelope after ``mutate`` rewrites its body.

    An initial interval keeps its old time-stamp token unless ``token`` is
    given; a key holder cannot obtain a fresh one for an old call.
    """
    env = decode_envelope(encoded)
    body = mutate(decode_body(env.kind, env.body))
    initial = env.kind == Kind.INITIAL
    new = sign_envelope(identity, env.kind, encode_body(body), include_certs=initial)
    if initial:
        new = attach_token(new, token or env.tsa_token)
    return encode_envelope(new)


def flip_bit(data: bytes, bit: int) -> bytes:
    b = bytearray(data)
    b[bit // 8] ^= 1 << (bit % 8)
    return bytes(b)


def flip_expected_codes(encoded: bytes, bit: int) -> frozenset[CheckCode]:
    """Codes an archive may legitimately report for a single flipped bit.

    Derived from the byte's role in the envelope layout alone.
    """
    env = decode_envelope(encoded)
    off = bit // 8
    malformed = frozenset({CheckCode.MALFORMED})
    layout_or_sig = frozenset({CheckCode.MALFORMED, CheckCode.CHK2})
    pos = 0
    if off < 4:
        return malformed
    if off == 4:
        # kind byte: an unknown or rule-breaking kind is malformed; a legal
        # alternative kind breaks the signature.
        return layout_or_sig | {CheckCode.CHAIN}
    pos = 5
    if off < pos + 4:
        return layout_or_sig
    pos += 4
    if off < pos + len(env.body):
        return frozenset({CheckCode.CHK2})
    pos += len(env.body)
    if off < pos + 2:
        return layout_or_sig
    pos += 2
    for cert in env.cert_chain:
        if off < pos + 4:
            return layout_or_sig
        pos += 4
        if off < pos + len(cert):
            return layout_or_sig
        pos += len(cert)
    if off < pos + 4:
        return layout_or_sig
    pos += 4
    if off < pos + len(env.signature):
        return frozenset({CheckCode.CHK2})
    pos += len(env.signature)
    if off == pos:
        return malformed
    pos += 1
    tok = env.tsa_token
    assert tok is not None, "offset beyond the end of a token-less envelope"
    if off < pos + 8:
        return frozenset({CheckCode.CHK1})
    pos += 8
    if off < pos + 4:
        return malformed | {CheckCode.CHK1}
    pos += 4
    if off < pos + len(tok.tsa_signature):
        return frozenset({CheckCode.CHK1})
    pos += len(tok.tsa_signature)
    if off < pos + 2:
        return malformed | {CheckCode.CHK1}
    return frozenset({CheckCode.CHK1})


# --- scenarios ---------------------------------------------------------------------

class AttackKind(enum.Enum):
    NONE = "none"
    BIT_FLIP = "bit-flip"
    DROP_INTERVAL = "drop-interval"
    REORDER = "reorder"
    TRUNCATE = "truncate"
    DUPLICATE_FRAME = "duplicate-frame"
    MITM_CONTINUE = "mitm-continue"
    REPLAY_INITIAL_NEW_TAIL = "replay-initial-new-tail"
    COMPROMISED_KEY_REPLAY = "compromised-key-replay"
    BACKDATE_COMBINED = "backdate-combined"
    EXCESS_LOSS = "excess-loss"
    CLOCK_SKEW = "clock-skew"
    # Faults of a tampered recorder or of the archive's own storage.
    STORE_TAMPER = "store-tamper"
    UNENFORCED_LOSS = "unenforced-loss"
    RTP_MISMATCH = "rtp-mismatch"
    ONE_SIDED_RECORDER = "one-sided-recorder"
    GARBLED_FRAME = "garbled-frame"
    STORAGE_FAILURE = "storage-failure"


@dataclass(frozen=True)
class Attack:
    kind: AttackKind = AttackKind.NONE
    n: int = 0
    m: int = 0
    bit: int = 0
    fraction: float = 0.0
    offset_us: int = 0


@dataclass(frozen=True)
class Expected:
    status: str
    code: Optional[CheckCode] = None
    position: Optional[int] = None
    reason: Optional[TerminationReason] = None


def expected_outcome(attack: Attack, frames: Sequence[bytes] = ()) -> Expected:
    """The fixed table of what each attack class must produce."""
    k = attack.kind
    rejected = lambda code, pos=None: Expected("rejected", code, pos)  # noqa: E731
    if k is AttackKind.NONE:
        return Expected("complete", reason=TerminationReason.HANGUP_A)
    if k is AttackKind.BIT_FLIP:
        return rejected(None, attack.n)
    if k is AttackKind.DROP_INTERVAL:
        if frames and attack.n == len(frames):
            return Expected("incomplete")
        return rejected(CheckCode.CHAIN, attack.n)
    if k is AttackKind.REORDER:
        return rejected(CheckCode.CHAIN, min(attack.n, attack.m))
    if k is AttackKind.TRUNCATE:
        return Expected("incomplete")
    if k is AttackKind.DUPLICATE_FRAME:
        return rejected(CheckCode.CHAIN, attack.n + 1)
    if k is AttackKind.MITM_CONTINUE:
        return rejected(CheckCode.CHK2, attack.n + 1)
    if k is AttackKind.REPLAY_INITIAL_NEW_TAIL:
        return rejected(CheckCode.NONCE, 1)
    if k is AttackKind.COMPROMISED_KEY_REPLAY:
        return rejected(CheckCode.CHK1, 1)
    if k is AttackKind.BACKDATE_COMBINED:
        return rejected(CheckCode.CHAIN, 2)
    if k is AttackKind.EXCESS_LOSS:
        return Expected("complete", reason=TerminationReason.QOS_VIOLATION)
    if k is AttackKind.CLOCK_SKEW:
        return rejected(CheckCode.CHK5, 2)
    if k is AttackKind.STORE_TAMPER:
        return rejected(CheckCode.CHK3, attack.n + 1)
    if k is AttackKind.UNENFORCED_LOSS:
        return rejected(CheckCode.CHK4)
    if k is AttackKind.RTP_MISMATCH:
        return rejected(CheckCode.CHK6, attack.n)
    if k is AttackKind.ONE_SIDED_RECORDER:
        return rejected(CheckCode.INTERLEAVE, 4)
    if k is AttackKind.GARBLED_FRAME:
        return rejected(CheckCode.MALFORMED, attack.n)
    if k is AttackKind.STORAGE_FAILURE:
        return rejected(CheckCode.STORAGE, attack.n + 1)
    raise HarnessConfigError(f"no expectation for {k}")


@dataclass(frozen=True)
class Scenario:
    name: str
    profile: TrafficProfile = TrafficProfile(duration_s=5.0)
    attack: Attack = Attack()
    interval_duration: int = 1_000_000
    loss_threshold: float = 0.01


@dataclass
class Outcome:
    scenario: str
    seed: int
    actual: Delivery
    expected: Expected
    reason: Optional[TerminationReason]
    offline_status: Optional[VerificationStatus]
    offline_code: Optional[CheckCode]
    archive_bytes: bytes = b""
    frames: int = 0
    passed: bool = False

    def line(self) -> str:
        a = self.actual
        got = a.status if a.code is None else f"{a.status} {a.code.name}@{a.position}"
        if self.reason is not None and a.status != "rejected":
            got += f" ({self.reason.name})"
        e = self.expected
        want = e.status
        if e.code is not None or e.status == "rejected":
            want += f" {e.code.name if e.code else 'any'}@{e.position if e.position else 'any'}"
        return f"{'PASS' if self.passed else 'FAIL'}  {self.scenario:<26} got: {got:<32} want: {want}"


@dataclass
class _Env:
    pki: TestPki
    clock: ManualClock
    tsa: TimestampAuthority
    store: ArchiveStore
    service: ArcService
    recorder_config: RecorderConfig


def _environment(scenario: Scenario, seed: int, root: Path, quota: Optional[int] = None) -> _Env:
    pki = make_test_pki(seed)
    clock = ManualClock()
    tsa = TimestampAuthority(pki.tsa, clock)
    store = ArchiveStore(root, quota_bytes=quota, durable=False)
    arc_cfg = ArcConfig(scenario.interval_duration, scenario.loss_threshold)
    service = ArcService(store, pki.root, [pki.tsa.leaf], arc_cfg, clock)
    rec_cfg = RecorderConfig(scenario.interval_duration, QosPolicy(scenario.loss_threshold))
    return _Env(pki, clock, tsa, store, service, rec_cfg)


def _record(env: _Env, profile: TrafficProfile, seed: int, start: int = START_TIME, config=None) -> Recording:
    call = generate_call(profile, seed, start)
    return record_call(call, env.pki.recorder, env.tsa, env.clock, config or env.recorder_config, seed)


def _legit_prior_call(env: _Env, scenario: Scenario, seed: int) -> Recording:
    """An earlier, honestly archived call."""
    rec = _record(env, TrafficProfile(duration_s=2.0), seed + 7919, START_TIME - 3_600_000_000)
    d = deliver(env.service, rec.session.call_id, [(i, t, f) for i, (t, f) in enumerate(rec.frames, 1)])
    if d.status != "complete":
        raise HarnessConfigError(f"prior call not archived: {d}")
    return rec


def run_scenario(scenario: Scenario, seed: int = 0, workdir: Optional[Path] = None) -> Outcome:
    """Run one scenario end to end and compare with the expectation table."""
    if workdir is None:
        with tempfile.TemporaryDirectory(prefix="voicearc-") as tmp:
            return run_scenario(scenario, seed, Path(tmp))
    attack, k = scenario.attack, scenario.attack.kind
    profile = scenario.profile
    if k is AttackKind.EXCESS_LOSS or k is AttackKind.UNENFORCED_LOSS:
        profile = replace(profile, loss=attack.fraction)
    if k is AttackKind.ONE_SIDED_RECORDER:
        profile = replace(profile, directions=(Direction.A_TO_B,))

    env = _environment(scenario, seed, Path(workdir))
    config = env.recorder_config
    if k is AttackKind.UNENFORCED_LOSS:
        config = replace(config, policy=QosPolicy(0.99))

    prior = None
    if k in (AttackKind.REPLAY_INITIAL_NEW_TAIL, AttackKind.COMPROMISED_KEY_REPLAY):
        prior = _legit_prior_call(env, scenario, seed)
    suppressed = None
    if k is AttackKind.BACKDATE_COMBINED:
        # Recorded through the recorder but intercepted before the archive.
        suppressed = _record(env, TrafficProfile(duration_s=1.0), seed + 104729, START_TIME - 86_400_000_000)

    rec = _record(env, profile, seed, config=config)
    frames = [(i, t, f) for i, (t, f) in enumerate(rec.frames, start=1)]
    original = [f for _, _, f in frames]
    between: Optional[Callable[[int], None]] = None

    if k is AttackKind.BIT_FLIP:
        if not 1 <= attack.n <= len(frames):
            raise HarnessConfigError("bit-flip frame out of range")
        i, t, f = frames[attack.n - 1]
        frames[attack.n - 1] = (i, t, flip_bit(f, attack.bit % (8 * len(f))))
    elif k is AttackKind.DROP_INTERVAL:
        del frames[attack.n - 1]
    elif k is AttackKind.REORDER:
        a, b = attack.n - 1, attack.m - 1
        frames[a], frames[b] = frames[b], frames[a]
    elif k is AttackKind.TRUNCATE:
        frames = frames[: len(frames) - max(attack.n, 1)]
    elif k is AttackKind.DUPLICATE_FRAME:
        frames.insert(attack.n, frames[attack.n - 1])
    elif k is AttackKind.MITM_CONTINUE:
        intruder = make_test_pki(f"intruder:{seed}", name="intruder").recorder
        forged = rechain(original[attack.n - 1 :], intruder, reindex=False)[1:]
        frames = frames[: attack.n] + [
            (i, t, f) for (i, t, _), f in zip(frames[attack.n :], forged)
        ]
    elif k is AttackKind.REPLAY_INITIAL_NEW_TAIL:
        assert prior is not None
        frames[0] = (1, frames[0][1], prior.encoded[0])
    elif k is AttackKind.COMPROMISED_KEY_REPLAY:
        assert prior is not None
        old_token = decode_envelope(prior.encoded[0]).tsa_token
        fresh = resign(
            original[0],
            env.pki.recorder,
            lambda b: InitialBody(replace(b.meta, nonce=bytes(reversed(b.meta.nonce)))),
            token=old_token,
        )
        frames[0] = (1, frames[0][1], fresh)
    elif k is AttackKind.BACKDATE_COMBINED:
        assert suppressed is not None
        frames[0] = (1, frames[0][1], suppressed.encoded[0])
    elif k is AttackKind.CLOCK_SKEW:
        frames = [(i, t + attack.offset_us, f) for i, t, f in frames]
    elif k is AttackKind.STORE_TAMPER:
        def corrupt_stored_tail(pos: int) -> None:
            if pos == attack.n + 1:
                p = env.store.path(rec.session.call_id)
                data = bytearray(p.read_bytes())
                data[-1] ^= 0x01
                p.write_bytes(bytes(data))

        between = corrupt_stored_tail
    elif k is AttackKind.RTP_MISMATCH:
        i, t, f = frames[attack.n - 1]

        def bump(body):
            if not isinstance(body, VoiceBody) or not body.abs_seqs:
                raise HarnessConfigError("rtp-mismatch needs a non-empty voice interval")
            return replace(body, abs_seqs=body.abs_seqs[:-1] + (body.abs_seqs[-1] + 1,))

        frames[attack.n - 1] = (i, t, resign(f, env.pki.recorder, bump))
    elif k is AttackKind.ONE_SIDED_RECORDER:
        only_a = lambda bodies: [  # noqa: E731
            b for b in bodies if not (isinstance(b, VoiceBody) and b.direction == Direction.B_TO_A)
        ]
        forged = rechain(original, env.pki.recorder, only_a)
        times = [t for _, t, _ in frames]
        frames = [(i, times[min(i - 1, len(times) - 1)], f) for i, f in enumerate(forged, start=1)]
    elif k is AttackKind.GARBLED_FRAME:
        i, t, f = frames[attack.n - 1]
        frames[attack.n - 1] = (i, t, f[: len(f) // 2])
    elif k is AttackKind.STORAGE_FAILURE:
        env.store.quota_bytes = env.store.used_bytes() + sum(len(f) + 4 for _, _, f in frames[: attack.n])

    known = set(env.store.nonces._nonces)
    delivery = deliver(env.service, rec.session.call_id, frames, between)
    expected = expected_outcome(attack, original)
    if k is AttackKind.BIT_FLIP:
        flipped = original[attack.n - 1]
        allowed = flip_expected_codes(flipped, attack.bit % (8 * len(flipped)))
    else:
        allowed = None

    virtual = frame_records(f for _, _, f in frames)
    offline = verify_archive(virtual, env.pki.root, [env.pki.tsa.leaf], env.service.config, known)
    try:
        archived = env.store.read(rec.session.call_id)
    except FileNotFoundError:
        archived = b""

    passed = delivery.status == expected.status
    if expected.status == "rejected":
        if allowed is not None:
            passed = passed and delivery.code in allowed
        elif expected.code is not None:
            passed = passed and delivery.code == expected.code
        if expected.position is not None:
            passed = passed and delivery.position == expected.position
    if expected.reason is not None:
        passed = passed and offline.summary.reason == expected.reason
    return Outcome(
        scenario.name,
        seed,
        delivery,
        expected,
        offline.summary.reason,
        offline.status,
        offline.check,
        archived,
        len(frames),
        passed,
    )


def _catalog() -> dict[str, Scenario]:
    s = [
        Scenario("clean", TrafficProfile(duration_s=3.0)),
        Scenario("bit-flip", attack=Attack(AttackKind.BIT_FLIP, n=4, bit=8 * 60 + 3)),
        Scenario("drop-interval", attack=Attack(AttackKind.DROP_INTERVAL, n=3)),
        Scenario("reorder", attack=Attack(AttackKind.REORDER, n=5, m=6)),
        Scenario("truncate", attack=Attack(AttackKind.TRUNCATE, n=1)),
        Scenario("duplicate-frame", attack=Attack(AttackKind.DUPLICATE_FRAME, n=3)),
        Scenario("mitm-continue", attack=Attack(AttackKind.MITM_CONTINUE, n=4)),
        Scenario("replay-initial-new-tail", attack=Attack(AttackKind.REPLAY_INITIAL_NEW_TAIL)),
        Scenario("compromised-key-replay", attack=Attack(AttackKind.COMPROMISED_KEY_REPLAY)),
        Scenario("backdate-combined", attack=Attack(AttackKind.BACKDATE_COMBINED)),
        Scenario("excess-loss", TrafficProfile(duration_s=10.0), Attack(AttackKind.EXCESS_LOSS, fraction=0.02)),
        Scenario("clock-skew", attack=Attack(AttackKind.CLOCK_SKEW, offset_us=5_000_000)),
        Scenario("store-tamper", attack=Attack(AttackKind.STORE_TAMPER, n=3)),
        Scenario("unenforced-loss", attack=Attack(AttackKind.UNENFORCED_LOSS, fraction=0.05)),
        Scenario("rtp-mismatch", attack=Attack(AttackKind.RTP_MISMATCH, n=10)),
        Scenario("one-sided-recorder", attack=Attack(AttackKind.ONE_SIDED_RECORDER)),
        Scenario("garbled-frame", attack=Attack(AttackKind.GARBLED_FRAME, n=5)),
        Scenario("storage-failure", attack=Attack(AttackKind.STORAGE_FAILURE, n=3)),
    ]
    return {x.name: x for x in s}


SCENARIOS: dict[str, Scenario] = _catalog()


def run_all(
    seed: int = 0, names: Optional[Iterable[str]] = None, parallel: bool = False
) -> list[Outcome]:
    chosen = [SCENARIOS[n] for n in (names or SCENARIOS)]
    if not parallel:
        return [run_scenario(s, seed) for s in chosen]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor() as pool:
        return list(pool.map(lambda s: run_scenario(s, seed), chosen))


def envelope_overhead(encoded: bytes) -> int:
    """Bytes in a voice envelope beyond its raw RTP packets and sequence list."""
    env = decode_envelope(encoded)
    body = decode_body(env.kind, env.body)
    if not isinstance(body, VoiceBody):
        raise ValueError("not a voice interval")
    return len(encoded) - sum(len(p) for p in body.packets) - 8 * len(body.abs_seqs)


__all__ = [
    "Attack",
    "AttackKind",
    "CaptureTransport",
    "Expected",
    "HarnessConfigError",
    "ManualClock",
    "Outcome",
    "SCENARIOS",
    "Scenario",
    "SyntheticCall",
    "TrafficProfile",
    "deliver",
    "envelope_overhead",
    "expected_outcome",
    "flip_bit",
    "flip_expected_codes",
    "generate_call",
    "read_capture",
    "record_call",
    "rechain",
    "resign",
    "run_all",
    "run_scenario",
    "write_capture",
]
