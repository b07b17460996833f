"""Record a synthetic call, archive it, verify the file offline, then truncate it.

Run with ``python demos/record_and_verify.py``.
"""

import tempfile
from pathlib import Path

from voicearc.arc import ArcConfig, ArcService, ArchiveStore
from voicearc.envelope import TimestampAuthority
from voicearc.harness import ManualClock, TrafficProfile, deliver, generate_call, record_call
from voicearc.pki import make_test_pki
from voicearc.verify import extract_streams, format_listing, verify_archive


def main() -> None:
    pki = make_test_pki("demo")
    clock = ManualClock()
    tsa = TimestampAuthority(pki.tsa, clock)

    call = generate_call(TrafficProfile(duration_s=3.0, loss=0.002), seed=1, start_time=clock.now)
    rec = record_call(call, pki.recorder, tsa, clock, seed=1)
    print(f"recorded {len(call.events)} packets into {len(rec.frames)} envelopes")

    with tempfile.TemporaryDirectory() as tmp:
        store = ArchiveStore(Path(tmp), durable=False)
        service = ArcService(store, pki.root, [pki.tsa.leaf], ArcConfig(), clock)
        frames = [(i, t, f) for i, (t, f) in enumerate(rec.frames, start=1)]
        result = deliver(service, rec.session.call_id, frames)
        print(f"archive session: {result.status}")

        archived = store.read(rec.session.call_id)
        print(format_listing(verify_archive(archived, pki.root, pki.tsa.leaf)))

        cut = archived[: len(archived) * 2 // 3]
        partial = verify_archive(cut, pki.root, pki.tsa.leaf)
        print(f"\nafter cutting the file to {len(cut)} bytes: {partial.status.value}")

        streams = extract_streams(archived)
        for direction, packets in streams.channels.items():
            print(f"{direction.name}: {len(packets)} packets, codec {packets[0].codec if packets else '-'}")


if __name__ == "__main__":
    main()
