"""Archive service: integrity checks, append-only storage and anchoring."""

from .anchor import (
    AnchorRecord,
    EmptyPeriod,
    RootMismatch,
    load_anchors,
    merkle_root,
    period_anchor,
    verify_anchor,
)
from .checks import ArcConfig, CheckCode, CheckReport, FrameChecker, Status
from .service import ArcService, ArcSession, wallclock_us
from .store import (
    ArchiveStore,
    RejectedAfterFinal,
    StorageError,
    StorageFull,
    frame_records,
    persist_interval,
    split_records,
)

__all__ = [
    "AnchorRecord",
    "ArcConfig",
    "ArcService",
    "ArcSession",
    "ArchiveStore",
    "CheckCode",
    "CheckReport",
    "EmptyPeriod",
    "FrameChecker",
    "RejectedAfterFinal",
    "RootMismatch",
    "Status",
    "StorageError",
    "StorageFull",
    "frame_records",
    "load_anchors",
    "merkle_root",
    "period_anchor",
    "persist_interval",
    "split_records",
    "verify_anchor",
    "wallclock_us",
]
