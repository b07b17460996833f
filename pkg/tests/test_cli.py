import socket
import subprocess
import sys
from pathlib import Path

import pytest

from voicearc.cli import EX_USAGE, main


def run(*args, **kw):
    return subprocess.run([sys.executable, "-m", "voicearc", *map(str, args)], capture_output=True, text=True, **kw)


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture(scope="module")
def pki_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("pki")
    assert main(["pki", "init", "--out", str(d)]) == 0
    return d


def start(*args):
    proc = subprocess.Popen([sys.executable, "-m", "voicearc", *map(str, args)], stdout=subprocess.PIPE, text=True)
    line = proc.stdout.readline()
    assert "listening" in line, line
    return proc


def test_usage_errors():
    assert run().returncode == EX_USAGE
    assert run("verify").returncode == EX_USAGE
    assert run("scenario", "run", "no-such-scenario").returncode == EX_USAGE


def test_scenario_all():
    r = run("scenario", "all", "--parallel")
    assert r.returncode == 0, r.stdout
    assert f"{len(r.stdout.splitlines()) - 1}/" in r.stdout.splitlines()[-1]
    assert "FAIL" not in r.stdout


def test_scenario_run_single(capsys):
    assert main(["scenario", "run", "backdate-combined"]) == 0
    assert "CHAIN@2" in capsys.readouterr().out


def test_record_verify_inspect_extract(tmp_path, pki_dir):
    cap = tmp_path / "call.cap"
    store = tmp_path / "store"
    assert main(["capture", "--out", str(cap), "--duration", "2"]) == 0
    tsa_port, arc_port = free_port(), free_port()
    tsa = start("tsa", "serve", "--listen", f"127.0.0.1:{tsa_port}", "--key", pki_dir / "tsa.key", "--chain", pki_dir / "tsa.chain")
    arc = start(
        "arc", "serve", "--listen", f"127.0.0.1:{arc_port}", "--store", store,
        "--trust-root", pki_dir / "root.cert", "--tsa-cert", pki_dir / "tsa.cert",
    )
    try:
        r = run(
            "vsec", "record", "--arc", f"127.0.0.1:{arc_port}", "--tsa", f"127.0.0.1:{tsa_port}",
            "--key", pki_dir / "recorder.key", "--chain", pki_dir / "recorder.chain", "--replay", cap,
            timeout=60,
        )
        assert r.returncode == 0, r.stderr
    finally:
        tsa.terminate()
        arc.terminate()
        tsa.wait()
        arc.wait()
    files = list(store.glob("*.sva"))
    assert len(files) == 1
    trust = ["--trust-root", pki_dir / "root.cert", "--tsa-cert", pki_dir / "tsa.cert"]
    v = run("verify", files[0], *trust)
    assert v.returncode == 0 and v.stdout.startswith("CompleteVerified"), v.stdout
    truncated = tmp_path / "cut.sva"
    truncated.write_bytes(files[0].read_bytes()[:-20])
    assert run("verify", truncated, *trust).returncode == 2
    damaged = bytearray(files[0].read_bytes())
    damaged[200] ^= 1
    bad = tmp_path / "bad.sva"
    bad.write_bytes(bytes(damaged))
    assert run("verify", bad, *trust).returncode == 1
    listing = run("inspect", files[0], *trust)
    assert listing.returncode == 0 and "Initial" in listing.stdout and "Final" in listing.stdout
    out = tmp_path / "media"
    assert run("extract", files[0], "--out-dir", out).returncode == 0
    assert (out / "AtoB.payload").stat().st_size == 100 * 160


def test_anchor_commands(tmp_path, pki_dir):
    port = free_port()
    store = tmp_path / "store"
    # Archive two calls with the library, then anchor through the CLI.
    from voicearc.arc import ArcConfig, ArcService, ArchiveStore
    from voicearc.envelope import TimestampAuthority
    from voicearc.harness import ManualClock, TrafficProfile, generate_call, record_call
    from voicearc.pki import load_certificate, load_identity

    root = load_certificate(pki_dir / "root.cert")
    rec_id = load_identity(pki_dir / "recorder.key", pki_dir / "recorder.chain")
    tsa_id = load_identity(pki_dir / "tsa.key", pki_dir / "tsa.chain")
    svc = ArcService(ArchiveStore(store, durable=False), root, [tsa_id.leaf], ArcConfig(), ManualClock())
    for i in range(2):
        clock = ManualClock()
        rec = record_call(generate_call(TrafficProfile(duration_s=1.0), i, clock.now), rec_id, TimestampAuthority(tsa_id, clock), clock, seed=i)
        session = svc.open_session(bytes([i]) * 16)
        for t, f in rec.frames:
            assert session.handle_frame(f, t).passed
    tsa = start("tsa", "serve", "--listen", f"127.0.0.1:{port}", "--key", pki_dir / "anchor-tsa.key", "--chain", pki_dir / "anchor-tsa.chain")
    try:
        r = run("anchor", "run", "--store", store, "--tsa", f"127.0.0.1:{port}", "--start", 0, "--end", 2**63)
        assert r.returncode == 0, r.stderr
    finally:
        tsa.terminate()
        tsa.wait()
    check = ["anchor", "verify", "--store", store, "--tsa-cert", pki_dir / "anchor-tsa.cert"]
    assert run(*check).returncode == 0
    victim = sorted(Path(store).glob("*.sva"))[0]
    data = bytearray(victim.read_bytes())
    data[-1] ^= 1
    victim.write_bytes(bytes(data))
    r = run(*check)
    assert r.returncode == 1 and "MISMATCH" in r.stdout
