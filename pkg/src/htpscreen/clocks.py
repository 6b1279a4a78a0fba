"""Clock abstraction so backoff delays and stage timing run on virtual time in tests.

``RealClock`` delegates to the wall clock. ``SimulatedClock`` implements
deterministic virtual time: ``sleep`` blocks until the clock reaches the
requested deadline, and the clock advances to the earliest pending deadline
once every registered worker thread is blocked in ``sleep``. Threads doing
simulated work register via ``with clock.worker():``; unregistered sleepers
simply join the deadline pool, so single-threaded code fast-forwards.
"""

from __future__ import annotations

import threading
import time
from contextlib import contextmanager
from datetime import datetime, timedelta, timezone

DEFAULT_EPOCH = datetime(2025, 1, 1, tzinfo=timezone.utc)


class Clock:
    def now(self) -> float:
        raise NotImplementedError

    def utcnow(self) -> datetime:
        raise NotImplementedError

    def sleep(self, seconds: float) -> None:
        raise NotImplementedError

    def expect_workers(self, count: int) -> None:
        """Coordinator-side announcement that ``count`` workers are about to start."""

    @contextmanager
    def worker(self):
        yield


class RealClock(Clock):
    def now(self) -> float:
        return time.monotonic()

    def utcnow(self) -> datetime:
        return datetime.now(timezone.utc)

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class SimulatedClock(Clock):
    """Virtual time shared by cooperating threads.

    ``stall_timeout`` is real seconds; if virtual time cannot advance for that
    long while a sleeper waits (a registered worker is blocked outside
    ``sleep``), we raise instead of hanging the test run.
    """

    def __init__(self, epoch: datetime = DEFAULT_EPOCH, stall_timeout: float = 10.0):
        self._epoch = epoch
        self._now = 0.0
        self._cond = threading.Condition()
        self._workers: set[int] = set()
        self._pending = 0  # announced via expect_workers but not yet started
        self._waiting: dict[int, float] = {}
        self._stall_timeout = stall_timeout

    def now(self) -> float:
        with self._cond:
            return self._now

    def utcnow(self) -> datetime:
        return self._epoch + timedelta(seconds=self.now())

    def expect_workers(self, count: int) -> None:
        """Block advancement until ``count`` further workers have registered.

        Call before spawning worker threads; otherwise an early worker could
        fast-forward past work its not-yet-started siblings were about to do.
        """
        with self._cond:
            self._pending += count

    @contextmanager
    def worker(self):
        tid = threading.get_ident()
        with self._cond:
            if self._pending > 0:
                self._pending -= 1
            self._workers.add(tid)
        try:
            yield
        finally:
            with self._cond:
                self._workers.discard(tid)
                self._maybe_advance()

    def sleep(self, seconds: float) -> None:
        if seconds <= 0:
            return
        tid = threading.get_ident()
        with self._cond:
            deadline = self._now + seconds
            self._waiting[tid] = deadline
            self._maybe_advance()
            try:
                while self._now < deadline:
                    before = self._now
                    if not self._cond.wait(timeout=self._stall_timeout) and self._now == before:
                        raise RuntimeError(
                            "simulated clock stalled: a registered worker is blocked outside sleep()"
                        )
            finally:
                del self._waiting[tid]
                self._maybe_advance()

    def _maybe_advance(self) -> None:
        # caller holds self._cond; advance only when no announced or registered
        # worker is still computing, so in-flight work is never skipped over
        if not self._waiting:
            return
        if self._pending > 0:
            return
        if self._workers - self._waiting.keys():
            return
        target = min(self._waiting.values())
        if target > self._now:
            self._now = target
        self._cond.notify_all()
