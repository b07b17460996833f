"""Command line entry points: ``voicearc <command> ...``.

Exit codes: 0 success, 1 rejected archive or failed scenario, 2 archive that
verifies only as an incomplete prefix, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import secrets
import select
import socket
import sys
import time
from pathlib import Path

from .arc import (
    ArcConfig,
    ArcService,
    ArchiveStore,
    load_anchors,
    period_anchor,
    verify_anchor,
    wallclock_us,
)
from .arc.anchor import AnchorError
from .arc.netproto import ArcClient, ArcServer, RemoteTsa, TsaServer, parse_address
from .chain import Direction, PayloadMapping, TerminationReason, parse_sdp_rtpmap
from .envelope import BadTsaSignature, TimestampAuthority, TsaUnavailable
from .pki import load_certificate, load_identity, make_test_pki, save_identity
from .verify import extract_streams, format_listing, verify_archive
from .vsec import ArcRejected, QosPolicy, RecorderConfig, new_call_meta, start_session

EX_USAGE = 64
log = logging.getLogger("voicearc")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _load_tsa_certs(paths):
    return [load_certificate(p) for p in paths]


def _arc_config(args) -> ArcConfig:
    return ArcConfig(args.interval_ms * 1000, args.loss_threshold)


# --- pki ---------------------------------------------------------------------

def cmd_pki_init(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pki = make_test_pki(args.seed)
    (out / "root.cert").write_bytes(pki.root.encode())
    for name, ident in (("recorder", pki.recorder), ("tsa", pki.tsa), ("anchor-tsa", pki.anchor_tsa)):
        save_identity(ident, out / f"{name}.key", out / f"{name}.chain")
        (out / f"{name}.cert").write_bytes(ident.leaf.encode())
    print(f"wrote test PKI to {out}")
    return 0


# --- servers -----------------------------------------------------------------

def cmd_tsa_serve(args) -> int:
    ident = load_identity(args.key, args.chain)
    server = TsaServer(parse_address(args.listen), TimestampAuthority(ident, wallclock_us))
    print(f"TSA listening on {server.server_address[0]}:{server.server_address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_arc_serve(args) -> int:
    store = ArchiveStore(args.store, quota_bytes=args.quota)
    service = ArcService(
        store, load_certificate(args.trust_root), _load_tsa_certs(args.tsa_cert), _arc_config(args)
    )
    server = ArcServer(parse_address(args.listen), service)
    print(f"archive listening on {server.server_address[0]}:{server.server_address[1]}", flush=True)
    server.serve_in_thread()
    anchor_tsa = RemoteTsa(parse_address(args.anchor_tsa)) if args.anchor_tsa else None
    period = args.anchor_period * 1_000_000
    start = wallclock_us()
    try:
        while True:
            time.sleep(0.2 if anchor_tsa else 3600)
            now = wallclock_us()
            if anchor_tsa and now - start >= period:
                try:
                    rec = period_anchor(store, start, now, anchor_tsa)
                    log.info("anchored %d calls", len(rec.call_ids))
                except AnchorError:
                    pass
                except TsaUnavailable as exc:
                    log.warning("anchoring postponed: %s", exc)
                    continue
                start = now
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()
    return 0


# --- recorder -------------------------------------------------------------------

def _payload_map(args):
    if args.sdp:
        return tuple(parse_sdp_rtpmap(Path(args.sdp).read_text()))
    return (PayloadMapping(0, "PCMU", 8000, 1),)


def _udp_events(args):
    socks = {}
    for direction, port in ((Direction.A_TO_B, args.port_a), (Direction.B_TO_A, args.port_b)):
        s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        s.bind((args.bind, port))
        socks[s] = direction
    deadline = time.monotonic() + args.duration
    try:
        while time.monotonic() < deadline:
            ready, _, _ = select.select(list(socks), [], [], 0.05)
            for s in ready:
                data, _ = s.recvfrom(65535)
                yield socks[s], data
            if not ready:
                yield None, None
    finally:
        for s in socks:
            s.close()


def _replay_events(path):
    from .harness import read_capture

    records = read_capture(Path(path).read_bytes())
    t0 = time.monotonic()
    for direction, offset, data in records:
        delay = t0 + offset / 1e6 - time.monotonic()
        if delay > 0:
            time.sleep(delay)
        yield direction, data


def cmd_vsec_record(args) -> int:
    ident = load_identity(args.key, args.chain)
    meta = new_call_meta(args.from_uri, args.to_uri, _payload_map(args))
    config = RecorderConfig(args.interval_ms * 1000, QosPolicy(args.loss_threshold))
    tsa = RemoteTsa(parse_address(args.tsa))
    call_id = secrets.token_bytes(16)
    with ArcClient(parse_address(args.arc), call_id) as client:
        try:
            session = start_session(meta, ident, tsa, client, wallclock_us(), config, call_id)
        except TsaUnavailable as exc:
            print(f"cannot start recording: {exc}", file=sys.stderr)
            return 1
        except ArcRejected as exc:
            print(f"archive rejected the initial interval (code {exc.code})", file=sys.stderr)
            return 1
        events = _replay_events(args.replay) if args.replay else _udp_events(args)
        try:
            for direction, data in events:
                now = wallclock_us()
                if data is None:
                    session.tick(now)
                else:
                    session.ingest_packet(direction, data, now)
                if session.reason is not None:
                    break
            if session.reason is None:
                session.close(TerminationReason.HANGUP_A, wallclock_us())
        except ArcRejected as exc:
            print(f"archive rejected an interval (code {exc.code})", file=sys.stderr)
            return 1
    print(
        f"call {call_id.hex()} closed ({session.reason.name}), "
        f"{session.sent_frames} envelopes sent"
    )
    return 0


# --- offline tools ----------------------------------------------------------------

def _verify(args):
    return verify_archive(
        Path(args.file).read_bytes(),
        load_certificate(args.trust_root),
        _load_tsa_certs(args.tsa_cert),
        _arc_config(args),
    )


def cmd_verify(args) -> int:
    result = _verify(args)
    line = result.status.value
    if result.check is not None:
        line += f" at envelope {result.position}: {result.check.name} {result.detail}"
    elif result.summary.reason is not None:
        line += f" ({result.summary.interval_count} envelopes, {result.summary.reason.name})"
    print(line)
    return result.status.exit_code


def cmd_inspect(args) -> int:
    result = _verify(args)
    print(format_listing(result))
    return result.status.exit_code


def cmd_extract(args) -> int:
    ex = extract_streams(Path(args.file).read_bytes())
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index = {"from": ex.meta.from_uri, "to": ex.meta.to_uri, "start_time": ex.meta.start_time}
    for d, packets in ex.channels.items():
        name = "AtoB" if d == Direction.A_TO_B else "BtoA"
        (out / f"{name}.payload").write_bytes(b"".join(p.payload for p in packets))
        index[name] = [
            {"abs_seq": p.abs_seq, "interval_time": p.interval_time, "codec": p.codec}
            for p in packets
        ]
    (out / "streams.json").write_text(json.dumps(index, indent=1))
    for w in ex.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"extracted {sum(len(v) for v in ex.channels.values())} packets to {out}")
    return 0


def cmd_capture(args) -> int:
    from .harness import TrafficProfile, generate_call, write_capture

    call = generate_call(TrafficProfile(duration_s=args.duration, loss=args.loss), args.seed)
    Path(args.out).write_bytes(write_capture(call))
    print(f"wrote {len(call.events)} packets to {args.out}")
    return 0


def cmd_anchor_run(args) -> int:
    store = ArchiveStore(args.store)
    rec = period_anchor(store, args.start, args.end, RemoteTsa(parse_address(args.tsa)))
    print(f"anchored {len(rec.call_ids)} calls, root {rec.merkle_root.hex()}")
    return 0


def cmd_anchor_verify(args) -> int:
    store = ArchiveStore(args.store)
    cert = load_certificate(args.tsa_cert)
    status = 0
    for anchor in load_anchors(store):
        try:
            verify_anchor(store, anchor, cert)
            print(f"ok        {anchor.period_start}-{anchor.period_end}")
        except (AnchorError, BadTsaSignature) as exc:
            print(f"MISMATCH  {anchor.period_start}-{anchor.period_end}: {exc}")
            status = 1
    return status


def cmd_scenario(args) -> int:
    from .harness import SCENARIOS, run_all

    if args.action == "list":
        print("\n".join(SCENARIOS))
        return 0
    if args.action == "run":
        if not args.names:
            print("scenario run needs at least one name", file=sys.stderr)
            return EX_USAGE
        unknown = [n for n in args.names if n not in SCENARIOS]
        if unknown:
            print(f"unknown scenario: {', '.join(unknown)}", file=sys.stderr)
            return EX_USAGE
        names = args.names
    else:
        names = None
    outcomes = run_all(args.seed, names, parallel=args.parallel)
    for o in outcomes:
        print(o.line())
    failed = sum(not o.passed for o in outcomes)
    print(f"{len(outcomes) - failed}/{len(outcomes)} scenarios as expected")
    return 1 if failed else 0


# --- parser -------------------------------------------------------------------------

def _add_check_options(p) -> None:
    p.add_argument("--interval-ms", type=int, default=1000)
    p.add_argument("--loss-threshold", type=float, default=0.01)


def _add_verify_options(p) -> None:
    p.add_argument("file")
    p.add_argument("--trust-root", required=True)
    p.add_argument("--tsa-cert", action="append", required=True)
    _add_check_options(p)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="voicearc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("pki", help="test key material")
    ps = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = ps.add_parser("init")
    q.add_argument("--out", required=True)
    q.add_argument("--seed", default="0")
    q.set_defaults(func=cmd_pki_init)

    p = sub.add_parser("tsa", help="time-stamping service")
    ps = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = ps.add_parser("serve")
    q.add_argument("--listen", default="127.0.0.1:7300")
    q.add_argument("--key", required=True)
    q.add_argument("--chain", required=True)
    q.set_defaults(func=cmd_tsa_serve)

    p = sub.add_parser("arc", help="archive service")
    ps = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = ps.add_parser("serve")
    q.add_argument("--listen", default="127.0.0.1:7400")
    q.add_argument("--store", required=True)
    q.add_argument("--trust-root", required=True)
    q.add_argument("--tsa-cert", action="append", required=True)
    q.add_argument("--quota", type=int, default=None, help="archive size limit in bytes")
    q.add_argument("--anchor-tsa", help="address of the anchoring TSA")
    q.add_argument("--anchor-period", type=int, default=3600, help="seconds")
    _add_check_options(q)
    q.set_defaults(func=cmd_arc_serve)

    p = sub.add_parser("vsec", help="call recorder")
    ps = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = ps.add_parser("record")
    q.add_argument("--arc", required=True)
    q.add_argument("--tsa", required=True)
    q.add_argument("--key", required=True)
    q.add_argument("--chain", required=True)
    q.add_argument("--replay", help="capture file to play back in real time")
    q.add_argument("--bind", default="127.0.0.1")
    q.add_argument("--port-a", type=int, default=7500)
    q.add_argument("--port-b", type=int, default=7502)
    q.add_argument("--duration", type=float, default=60.0, help="seconds to listen")
    q.add_argument("--from-uri", default="sip:a@localhost")
    q.add_argument("--to-uri", default="sip:b@localhost")
    q.add_argument("--sdp", help="SDP file whose rtpmap lines give the payload map")
    _add_check_options(q)
    q.set_defaults(func=cmd_vsec_record)

    for name, func, help_ in (
        ("verify", cmd_verify, "verify an archived call file"),
        ("inspect", cmd_inspect, "list the envelopes of a call file"),
    ):
        q = sub.add_parser(name, help=help_)
        _add_verify_options(q)
        q.set_defaults(func=func)
    q = sub.add_parser("extract", help="write per-direction media of a call file")
    q.add_argument("file")
    q.add_argument("--out-dir", required=True)
    q.set_defaults(func=cmd_extract)

    q = sub.add_parser("capture", help="generate a synthetic capture file")
    q.add_argument("--out", required=True)
    q.add_argument("--duration", type=float, default=5.0)
    q.add_argument("--loss", type=float, default=0.0)
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=cmd_capture)

    p = sub.add_parser("anchor", help="Merkle anchors over closed calls")
    ps = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = ps.add_parser("run")
    q.add_argument("--store", required=True)
    q.add_argument("--tsa", required=True)
    q.add_argument("--start", type=int, required=True)
    q.add_argument("--end", type=int, required=True)
    q.set_defaults(func=cmd_anchor_run)
    q = ps.add_parser("verify")
    q.add_argument("--store", required=True)
    q.add_argument("--tsa-cert", required=True)
    q.set_defaults(func=cmd_anchor_verify)

    q = sub.add_parser("scenario", help="attack simulation")
    q.add_argument("action", choices=["run", "all", "list"])
    q.add_argument("names", nargs="*")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--parallel", action="store_true")
    q.set_defaults(func=cmd_scenario)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.ERROR,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"voicearc: {exc}", file=sys.stderr)
        return EX_USAGE


if __name__ == "__main__":
    sys.exit(main())
