"""Periodic Merkle-tree anchors over closed call files."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from typing import Sequence

from ..envelope import HashDigest, TsaToken, envelope_hash, tsa_verify
from ..pki import Certificate
from .store import ANCHOR_DIR, ArchiveStore


class AnchorError(ValueError):
    pass


class EmptyPeriod(AnchorError):
    pass


class RootMismatch(AnchorError):
    pass


def merkle_root(leaves: Sequence[bytes]) -> bytes:
    """Binary tree over 32-byte leaves; an odd level duplicates its last node.

    A lone leaf is combined with itself, so the root is always an inner node.
    """
    if not leaves:
        raise ValueError("no leaves")
    level = list(leaves)
    while True:
        if len(level) % 2:
            level.append(level[-1])
        level = [hashlib.sha256(level[i] + level[i + 1]).digest() for i in range(0, len(level), 2)]
        if len(level) == 1:
            return level[0]


@dataclass(frozen=True)
class AnchorRecord:
    period_start: int
    period_end: int
    call_ids: tuple[bytes, ...]
    merkle_root: HashDigest
    tsa_token: TsaToken

    def covered(self) -> bytes:
        return anchor_covered(self.period_start, self.period_end, self.merkle_root.value)

    def to_json(self) -> str:
        tok = self.tsa_token
        return json.dumps(
            {
                "period_start": self.period_start,
                "period_end": self.period_end,
                "call_ids": [c.hex() for c in self.call_ids],
                "merkle_root": self.merkle_root.hex(),
                "tsa_time": tok.tsa_time,
                "tsa_signature": tok.tsa_signature.hex(),
                "tsa_cert_id": tok.tsa_cert_id.hex(),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "AnchorRecord":
        d = json.loads(text)
        return cls(
            d["period_start"],
            d["period_end"],
            tuple(bytes.fromhex(c) for c in d["call_ids"]),
            HashDigest(bytes.fromhex(d["merkle_root"])),
            TsaToken(
                d["tsa_time"], bytes.fromhex(d["tsa_signature"]), bytes.fromhex(d["tsa_cert_id"])
            ),
        )


def anchor_covered(start: int, end: int, root: bytes) -> bytes:
    return b"SVAN" + struct.pack("!QQ", start, end) + root


def file_leaves(store: ArchiveStore, call_ids: Sequence[bytes]) -> list[bytes]:
    leaves = []
    for cid in call_ids:
        try:
            data = store.read(cid)
        except FileNotFoundError:
            raise RootMismatch(f"archived call {cid.hex()} is missing") from None
        leaves.append(envelope_hash(data).value)
    return leaves


def period_anchor(store: ArchiveStore, period_start: int, period_end: int, tsa_client) -> AnchorRecord:
    call_ids = tuple(store.closed_between(period_start, period_end))
    if not call_ids:
        raise EmptyPeriod(f"no calls closed in [{period_start}, {period_end})")
    root = merkle_root(file_leaves(store, call_ids))
    token = tsa_client.timestamp(anchor_covered(period_start, period_end, root))
    record = AnchorRecord(period_start, period_end, call_ids, HashDigest(root), token)
    path = store.root / ANCHOR_DIR / f"{period_start}-{period_end}.json"
    path.write_text(record.to_json())
    return record


def verify_anchor(store: ArchiveStore, anchor: AnchorRecord, tsa_cert: Certificate) -> bool:
    """Raise RootMismatch or BadTsaSignature; returns True when intact."""
    tsa_verify(anchor.tsa_token, anchor.covered(), tsa_cert)
    root = merkle_root(file_leaves(store, anchor.call_ids))
    if root != anchor.merkle_root.value:
        raise RootMismatch("archive contents changed since anchoring")
    return True


def load_anchors(store: ArchiveStore) -> list[AnchorRecord]:
    return [
        AnchorRecord.from_json(p.read_text())
        for p in sorted((store.root / ANCHOR_DIR).glob("*.json"))
    ]
