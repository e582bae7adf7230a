"""Clocks and task scheduling.

Every time-dependent component (broker receipt stamps, driver ticks,
interpreter publish ticks, replay pacing) reads time from a runtime instead
of the system clock, so the whole node graph can run either in real time
(threaded timer) or on a simulated clock that advances as fast as the work
allows. Simulated runs are single-threaded and deterministic: due tasks
execute in (time, creation order).

A `TaskHandle` cancels cleanly from any thread; periodic tasks are
fixed-rate (next fire = previous scheduled fire + period, no drift).
"""

from __future__ import annotations

import heapq
import itertools
import logging
import threading
import time
from typing import Callable, Protocol

log = logging.getLogger(__name__)


class Clock(Protocol):
    def now_ns(self) -> int: ...


class SystemClock:
    def now_ns(self) -> int:
        return time.time_ns()


class SimClock:
    """Manually advanced clock. Starts at an arbitrary positive epoch."""

    def __init__(self, start_ns: int = 1_000_000_000_000_000_000):
        self._now = start_ns
        self._lock = threading.Lock()

    def now_ns(self) -> int:
        with self._lock:
            return self._now

    def advance_to(self, t_ns: int) -> None:
        with self._lock:
            if t_ns > self._now:
                self._now = t_ns


class TaskHandle:
    def __init__(self):
        self._cancelled = threading.Event()

    def cancel(self) -> None:
        self._cancelled.set()

    @property
    def cancelled(self) -> bool:
        return self._cancelled.is_set()


class Runtime(Protocol):
    clock: Clock

    def now_ns(self) -> int: ...

    def schedule_at(self, t_ns: int, fn: Callable[[], None]) -> TaskHandle: ...

    def schedule_periodic(self, period_ns: int, fn: Callable[[], None],
                          first_delay_ns: int | None = None) -> TaskHandle: ...


def _run_task(fn: Callable[[], None]) -> None:
    try:
        fn()
    except Exception:
        log.exception("scheduled task failed")


class RealRuntime:
    """Wall-clock runtime backed by a single timer thread.

    All scheduled callbacks execute on that thread, in due order. Fine for
    desk-scale node graphs (drivers at a few Hz); not a general executor.
    """

    def __init__(self, clock: Clock | None = None):
        self.clock = clock or SystemClock()
        self._heap: list[tuple[int, int, Callable[[], None], TaskHandle]] = []
        self._counter = itertools.count()
        self._cond = threading.Condition()
        self._thread: threading.Thread | None = None
        self._shutdown = False

    def now_ns(self) -> int:
        return self.clock.now_ns()

    def _ensure_thread(self) -> None:
        if self._thread is None or not self._thread.is_alive():
            self._thread = threading.Thread(target=self._loop, daemon=True,
                                            name="physiobus-timer")
            self._thread.start()

    def schedule_at(self, t_ns: int, fn: Callable[[], None]) -> TaskHandle:
        handle = TaskHandle()
        with self._cond:
            heapq.heappush(self._heap, (t_ns, next(self._counter), fn, handle))
            self._ensure_thread()
            self._cond.notify()
        return handle

    def schedule_periodic(self, period_ns: int, fn: Callable[[], None],
                          first_delay_ns: int | None = None) -> TaskHandle:
        if period_ns <= 0:
            raise ValueError("period_ns must be positive")
        handle = TaskHandle()
        first = self.now_ns() + (period_ns if first_delay_ns is None
                                 else first_delay_ns)

        def fire_at(due: int):
            def run():
                if handle.cancelled:
                    return
                _run_task(fn)
                if not handle.cancelled:
                    with self._cond:
                        heapq.heappush(self._heap, (
                            due + period_ns, next(self._counter),
                            fire_at(due + period_ns), handle))
                        self._cond.notify()
            return run

        with self._cond:
            heapq.heappush(self._heap,
                           (first, next(self._counter), fire_at(first), handle))
            self._ensure_thread()
            self._cond.notify()
        return handle

    def _loop(self) -> None:
        while True:
            with self._cond:
                if self._shutdown:
                    return
                if not self._heap:
                    self._cond.wait(timeout=0.5)
                    continue
                due, _, fn, handle = self._heap[0]
                now = self.now_ns()
                if due > now:
                    self._cond.wait(timeout=min((due - now) / 1e9, 0.5))
                    continue
                heapq.heappop(self._heap)
            if not handle.cancelled:
                _run_task(fn)

    def shutdown(self) -> None:
        with self._cond:
            self._shutdown = True
            self._heap.clear()
            self._cond.notify()


class SimRuntime:
    """Deterministic virtual-time runtime.

    Nothing runs until :meth:`run_until` / :meth:`run_for` drains the due
    tasks; the clock jumps to each task's fire time as it executes.
    """

    def __init__(self, start_ns: int = 1_000_000_000_000_000_000):
        self.clock = SimClock(start_ns)
        self._heap: list[tuple[int, int, Callable[[], None], TaskHandle]] = []
        self._counter = itertools.count()
        self._lock = threading.Lock()

    def now_ns(self) -> int:
        return self.clock.now_ns()

    def schedule_at(self, t_ns: int, fn: Callable[[], None]) -> TaskHandle:
        handle = TaskHandle()
        with self._lock:
            heapq.heappush(self._heap, (max(t_ns, self.now_ns()),
                                        next(self._counter), fn, handle))
        return handle

    def schedule_periodic(self, period_ns: int, fn: Callable[[], None],
                          first_delay_ns: int | None = None) -> TaskHandle:
        if period_ns <= 0:
            raise ValueError("period_ns must be positive")
        handle = TaskHandle()
        first = self.now_ns() + (period_ns if first_delay_ns is None
                                 else first_delay_ns)

        def fire_at(due: int):
            def run():
                if handle.cancelled:
                    return
                _run_task(fn)
                if not handle.cancelled:
                    with self._lock:
                        heapq.heappush(self._heap, (
                            due + period_ns, next(self._counter),
                            fire_at(due + period_ns), handle))
            return run

        with self._lock:
            heapq.heappush(self._heap,
                           (first, next(self._counter), fire_at(first), handle))
        return handle

    def run_until(self, t_ns: int) -> None:
        """Execute every task due at or before `t_ns`, then set the clock."""
        while True:
            with self._lock:
                if not self._heap or self._heap[0][0] > t_ns:
                    break
                due, _, fn, handle = heapq.heappop(self._heap)
            self.clock.advance_to(due)
            if not handle.cancelled:
                _run_task(fn)
        self.clock.advance_to(t_ns)

    def run_for(self, duration_s: float) -> None:
        self.run_until(self.now_ns() + int(duration_s * 1e9))

    def shutdown(self) -> None:
        with self._lock:
            self._heap.clear()
