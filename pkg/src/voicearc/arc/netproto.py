"""Framed TCP protocol between recorder and archive, plus a TSA endpoint.

Recorder to archive::

    handshake: "SVAP" | version u8 = 1 | call_id (16)
    frames:    frame_len u32 | encoded envelope
    reply:     0x00 ACK, or 0xE0 + check code REJECT (connection then closes)

Time-stamp requests carry ``"SVAT" | len u32 | covered bytes``; the reply
is ``len u32 | tsa_time u64 | sig_len u32 | sig | id_len u16 | cert_id``.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import struct
import threading

from ..envelope import TsaToken, TsaUnavailable
from ..vsec import ArcRejected
from .service import ArcService

log = logging.getLogger(__name__)

HANDSHAKE_MAGIC = b"SVAP"
PROTOCOL_VERSION = 1
ACK = 0x00
REJECT_BASE = 0xE0
MAX_FRAME = 16 * 1024 * 1024
TSA_MAGIC = b"SVAT"


class ProtocolError(ConnectionError):
    pass


def recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise EOFError("connection closed")
        buf += chunk
    return bytes(buf)


def handshake_bytes(call_id: bytes) -> bytes:
    if len(call_id) != 16:
        raise ValueError("call id must be 16 bytes")
    return HANDSHAKE_MAGIC + bytes([PROTOCOL_VERSION]) + call_id


def frame_bytes(encoded: bytes) -> bytes:
    return struct.pack("!I", len(encoded)) + encoded


class _ArcHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        service: ArcService = self.server.service  # type: ignore[attr-defined]
        sock = self.request
        try:
            hello = recv_exact(sock, 21)
        except EOFError:
            return
        if hello[:4] != HANDSHAKE_MAGIC or hello[4] != PROTOCOL_VERSION:
            log.warning("bad handshake from %s", self.client_address)
            return
        session = service.open_session(hello[5:])
        try:
            while not session.terminated:
                try:
                    (n,) = struct.unpack("!I", recv_exact(sock, 4))
                    if n > MAX_FRAME:
                        raise ProtocolError(f"frame of {n} bytes")
                    encoded = recv_exact(sock, n)
                except EOFError:
                    break
                report = session.handle_frame(encoded)
                code = report.failed_code
                sock.sendall(bytes([ACK if code is None else REJECT_BASE + int(code)]))
                if code is not None:
                    break
        except (ProtocolError, OSError) as exc:
            log.warning("connection from %s dropped: %s", self.client_address, exc)
        finally:
            session.connection_closed()


class ArcServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, service: ArcService):
        super().__init__(address, _ArcHandler)
        self.service = service

    def serve_in_thread(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, daemon=True)
        t.start()
        return t


class ArcClient:
    """Recorder-side transport over TCP; raises ArcRejected on REJECT."""

    def __init__(self, address, call_id: bytes, timeout: float = 10.0):
        self.sock = socket.create_connection(address, timeout=timeout)
        self.sock.sendall(handshake_bytes(call_id))

    def send(self, encoded: bytes) -> None:
        self.sock.sendall(frame_bytes(encoded))
        reply = recv_exact(self.sock, 1)[0]
        if reply != ACK:
            raise ArcRejected(reply - REJECT_BASE)

    def close(self) -> None:
        self.sock.close()

    def __enter__(self) -> "ArcClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


# --- time-stamping endpoint ------------------------------------------------

def encode_token(tok: TsaToken) -> bytes:
    return (
        struct.pack("!QI", tok.tsa_time, len(tok.tsa_signature))
        + tok.tsa_signature
        + struct.pack("!H", len(tok.tsa_cert_id))
        + tok.tsa_cert_id
    )


def decode_token(data: bytes) -> TsaToken:
    tsa_time, n = struct.unpack_from("!QI", data, 0)
    sig = data[12 : 12 + n]
    (id_len,) = struct.unpack_from("!H", data, 12 + n)
    return TsaToken(tsa_time, sig, data[14 + n : 14 + n + id_len])


class _TsaHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        authority = self.server.authority  # type: ignore[attr-defined]
        sock = self.request
        try:
            while True:
                head = recv_exact(sock, 8)
                if head[:4] != TSA_MAGIC:
                    return
                (n,) = struct.unpack("!I", head[4:])
                if n > MAX_FRAME:
                    return
                covered = recv_exact(sock, n)
                reply = encode_token(authority.timestamp(covered))
                sock.sendall(struct.pack("!I", len(reply)) + reply)
        except (EOFError, OSError, TsaUnavailable):
            return


class TsaServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, authority):
        super().__init__(address, _TsaHandler)
        self.authority = authority

    def serve_in_thread(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, daemon=True)
        t.start()
        return t


class RemoteTsa:
    """Client for :class:`TsaServer`; raises TsaUnavailable on failure."""

    def __init__(self, address, timeout: float = 5.0):
        self.address = address
        self.timeout = timeout

    def timestamp(self, covered: bytes) -> TsaToken:
        try:
            with socket.create_connection(self.address, timeout=self.timeout) as sock:
                sock.sendall(TSA_MAGIC + struct.pack("!I", len(covered)) + covered)
                (n,) = struct.unpack("!I", recv_exact(sock, 4))
                return decode_token(recv_exact(sock, n))
        except (OSError, EOFError, struct.error) as exc:
            raise TsaUnavailable(f"TSA at {self.address}: {exc}") from exc


def parse_address(text: str, default_host: str = "127.0.0.1") -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return (host or default_host, int(port))

