"""Append-only on-disk archive of length-prefixed envelopes."""

from __future__ import annotations

import os
import struct
import threading
from pathlib import Path
from typing import Iterable, Optional

SUFFIX = ".sva"
REJECTED_SUFFIX = ".rejected"
NONCE_INDEX = "nonces.idx"
CLOSED_INDEX = "closed.idx"
ANCHOR_DIR = "anchors"


class StorageError(OSError):
    pass


class StorageFull(StorageError):
    pass


class RejectedAfterFinal(StorageError):
    pass


def frame_records(records: Iterable[bytes]) -> bytes:
    return b"".join(struct.pack("!I", len(r)) + r for r in records)


def split_records(data: bytes) -> tuple[list[bytes], bool]:
    """Split a call file into records; the flag reports a torn trailing record."""
    out, pos = [], 0
    while pos < len(data):
        if pos + 4 > len(data):
            return out, True
        (n,) = struct.unpack_from("!I", data, pos)
        if pos + 4 + n > len(data):
            return out, True
        out.append(data[pos + 4 : pos + 4 + n])
        pos += 4 + n
    return out, False


class NonceIndex:
    """Archive-wide set of initial-interval nonces, persisted as hex lines."""

    def __init__(self, path: Optional[Path] = None):
        self.path = path
        self._lock = threading.Lock()
        self._nonces: set[bytes] = set()
        if path is not None and path.exists():
            for line in path.read_text().split():
                self._nonces.add(bytes.fromhex(line))

    def __contains__(self, nonce: bytes) -> bool:
        with self._lock:
            return nonce in self._nonces

    def add(self, nonce: bytes) -> bool:
        """Insert ``nonce``; returns False if it was already present."""
        with self._lock:
            if nonce in self._nonces:
                return False
            self._nonces.add(nonce)
            if self.path is not None:
                with open(self.path, "a") as fh:
                    fh.write(nonce.hex() + "\n")
            return True


class ArchiveStore:
    def __init__(self, root, quota_bytes: Optional[int] = None, durable: bool = True):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / ANCHOR_DIR).mkdir(exist_ok=True)
        self.quota_bytes = quota_bytes
        self.durable = durable
        self.nonces = NonceIndex(self.root / NONCE_INDEX)
        self._lock = threading.Lock()
        self._open: dict[bytes, object] = {}
        self._sizes: dict[bytes, int] = {}
        self._last: dict[bytes, int] = {}
        self._finished: set[bytes] = set()

    def path(self, call_id: bytes) -> Path:
        return self.root / (call_id.hex() + SUFFIX)

    def rejected_path(self, call_id: bytes) -> Path:
        return self.root / (call_id.hex() + SUFFIX + REJECTED_SUFFIX)

    def used_bytes(self) -> int:
        return sum(p.stat().st_size for p in self.root.glob("*" + SUFFIX + "*"))

    def create(self, call_id: bytes) -> None:
        with self._lock:
            p = self.path(call_id)
            if p.exists() or self.rejected_path(call_id).exists() or call_id in self._open:
                raise StorageError(f"call {call_id.hex()} already archived")
            self._open[call_id] = open(p, "xb")
            self._sizes[call_id] = 0

    def append(self, call_id: bytes, encoded: bytes) -> int:
        """Append one record and return its offset."""
        if call_id in self._finished:
            raise RejectedAfterFinal(f"call {call_id.hex()} already has its final interval")
        fh = self._open.get(call_id)
        if fh is None:
            raise StorageError(f"call {call_id.hex()} is not open")
        record = struct.pack("!I", len(encoded)) + encoded
        if self.quota_bytes is not None and self.used_bytes() + len(record) > self.quota_bytes:
            raise StorageFull("archive quota exhausted")
        offset = self._sizes[call_id]
        fh.write(record)
        fh.flush()
        if self.durable:
            os.fsync(fh.fileno())
        self._sizes[call_id] = offset + len(record)
        self._last[call_id] = offset
        return offset

    def last_record(self, call_id: bytes) -> Optional[bytes]:
        """Read back the most recently appended record from disk."""
        offset = self._last.get(call_id)
        if offset is None:
            return None
        with open(self.path(call_id), "rb") as fh:
            fh.seek(offset)
            head = fh.read(4)
            if len(head) < 4:
                return b""
            (n,) = struct.unpack("!I", head)
            return fh.read(n)

    def close(self, call_id: bytes, close_time: int) -> None:
        with self._lock:
            self._finished.add(call_id)
            fh = self._open.pop(call_id, None)
            if fh is not None:
                fh.close()
            with open(self.root / CLOSED_INDEX, "a") as idx:
                idx.write(f"{call_id.hex()} {close_time}\n")

    def abandon(self, call_id: bytes) -> None:
        """Release the handle of an unfinished call; its file stays as a prefix."""
        with self._lock:
            fh = self._open.pop(call_id, None)
            if fh is not None:
                fh.close()

    def mark_rejected(self, call_id: bytes) -> Path:
        self.abandon(call_id)
        with self._lock:
            src, dst = self.path(call_id), self.rejected_path(call_id)
            if src.exists():
                src.rename(dst)
            return dst

    def read(self, call_id: bytes) -> bytes:
        return self.path(call_id).read_bytes()

    def closed_calls(self) -> list[tuple[bytes, int]]:
        p = self.root / CLOSED_INDEX
        if not p.exists():
            return []
        out = []
        for line in p.read_text().splitlines():
            cid, t = line.split()
            out.append((bytes.fromhex(cid), int(t)))
        return out

    def closed_between(self, start: int, end: int) -> list[bytes]:
        """Calls closed in ``[start, end)`` whose files are still accepted."""
        return sorted(
            cid for cid, t in self.closed_calls() if start <= t < end and self.path(cid).exists()
        )


def persist_interval(store: ArchiveStore, call_id: bytes, encoded: bytes) -> int:
    return store.append(call_id, encoded)
