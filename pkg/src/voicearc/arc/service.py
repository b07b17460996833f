"""Archive sessions: check, persist, reject."""

from __future__ import annotations

import logging
import time
from typing import Callable, Mapping, Optional, Sequence

from ..chain import FinalBody, InitialBody
from ..envelope import envelope_hash
from ..pki import Certificate
from .checks import PASS, ArcConfig, CheckCode, CheckReport, FrameChecker
from .store import ArchiveStore, StorageError

log = logging.getLogger(__name__)


def wallclock_us() -> int:
    return time.time_ns() // 1000


class ArcService:
    def __init__(
        self,
        store: ArchiveStore,
        trust_root: Certificate,
        tsa_certs: Mapping[bytes, Certificate] | Sequence[Certificate],
        config: ArcConfig = ArcConfig(),
        clock: Callable[[], int] = wallclock_us,
    ):
        self.store = store
        self.trust_root = trust_root
        self.tsa_certs = tsa_certs
        self.config = config
        self.clock = clock

    def open_session(self, call_id: bytes) -> "ArcSession":
        return ArcSession(self, call_id)


class ArcSession:
    """Checks and archives the frames of one call, in arrival order.

    The first failing frame terminates the session and the partial file
    is kept under a ``.rejected`` name.
    """

    def __init__(self, service: ArcService, call_id: bytes):
        self.service = service
        self.store = service.store
        self.call_id = call_id
        self.checker = FrameChecker(
            service.trust_root,
            service.tsa_certs,
            service.config,
            seen_nonce=self.store.nonces.__contains__,
        )
        self.frames = 0
        self.rejection: Optional[tuple[int, CheckReport]] = None
        self._created = False

    @property
    def finished(self) -> bool:
        return self.checker.finished

    @property
    def terminated(self) -> bool:
        return self.rejection is not None or self.finished

    def handle_frame(self, encoded: bytes, arrival_time: Optional[int] = None) -> CheckReport:
        if arrival_time is None:
            arrival_time = self.service.clock()
        position = self.frames + 1
        if self.rejection is not None:
            return CheckReport().fail(CheckCode.CHAIN, "session already rejected")
        if self.finished:
            return CheckReport().fail(CheckCode.CHAIN, "AlreadyFinished: frame after final interval")

        ev = self.checker.evaluate(encoded, arrival_time)
        report = ev.report
        if report.passed:
            self._store_checks(ev, encoded, report)
        if report.passed:
            ev.commit()
            self.frames += 1
            if isinstance(ev.body, FinalBody):
                self.store.close(self.call_id, arrival_time)
        else:
            self._reject(position, report)
        return report

    def _store_checks(self, ev, encoded: bytes, report: CheckReport) -> None:
        # CHK3: the record on disk must still hash to the chain head.
        if self._created:
            stored = self.store.last_record(self.call_id)
            head = self.checker.chain.prev_hash
            if stored is None or envelope_hash(stored) != head:
                report.fail(CheckCode.CHK3, "archived predecessor no longer matches chain hash")
                return
            report.set(CheckCode.CHK3, PASS)
        if isinstance(ev.body, InitialBody):
            if not self.store.nonces.add(ev.body.meta.nonce):
                report.set(CheckCode.NONCE, PASS)
                report.fail(CheckCode.NONCE, "nonce archived concurrently")
                return
        try:
            if not self._created:
                self.store.create(self.call_id)
                self._created = True
            self.store.append(self.call_id, encoded)
        except (StorageError, OSError) as exc:
            report.fail(CheckCode.STORAGE, str(exc))
            return
        report.set(CheckCode.STORAGE, PASS)

    def _reject(self, position: int, report: CheckReport) -> None:
        self.rejection = (position, report)
        log.warning(
            "call %s rejected at frame %d: %s", self.call_id.hex(), position, report.summary()
        )
        if self._created:
            self.store.mark_rejected(self.call_id)

    def connection_closed(self) -> None:
        """Transport went away; an unfinished call remains as a verifiable prefix."""
        if not self.terminated and self._created:
            self.store.abandon(self.call_id)
