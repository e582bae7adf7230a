"""Time-domain HRV statistics over RR-interval windows.

RR and NN intervals are treated as identical apart from a physiologic
range gate: intervals outside [300, 2000] ms are dropped and counted, with
no further ectopic-beat correction. Conventions pinned here because they
differ across the literature:

* SDNN uses the sample standard deviation (divisor N-1)
* RMSSD averages the squared successive differences over their own count
* pNN50 counts successive differences strictly greater than 50 ms
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import EmptyWindow, InsufficientData, NonMonotonicInput

RR_RANGE_MS = (300.0, 2000.0)
DISCREPANCY_EPS = 1e-9


def _in_range(rr_ms: float) -> bool:
    return RR_RANGE_MS[0] <= rr_ms <= RR_RANGE_MS[1]


@dataclass
class RrSeries:
    """Gated RR intervals extracted from a peak train."""

    values: list[float]
    rejected: int


def rr_from_peaks(peak_times_ns) -> RrSeries:
    """Successive peak-to-peak intervals in ms, range-gated."""
    times = list(peak_times_ns)
    values: list[float] = []
    rejected = 0
    for a, b in zip(times, times[1:]):
        if b < a:
            raise NonMonotonicInput(
                f"peak times decrease: {a} -> {b}")
        rr = (b - a) / 1e6
        if _in_range(rr):
            values.append(rr)
        else:
            rejected += 1
    return RrSeries(values, rejected)


class RrWindow:
    """Trailing time window of accepted RR intervals.

    Entries are (time of the closing peak, rr). `values` filters by age
    without mutating, so repeated reads at one instant agree.
    """

    def __init__(self, window_s: float = 60.0, capacity: int = 600):
        self.window_ns = int(window_s * 1e9)
        self.capacity = capacity
        self._entries: deque[tuple[int, float]] = deque()
        self.rejected = 0

    def add(self, t_ns: int, rr_ms: float) -> bool:
        if self._entries and t_ns < self._entries[-1][0]:
            raise NonMonotonicInput("RR entries must arrive in time order")
        if not _in_range(rr_ms):
            self.rejected += 1
            return False
        self._entries.append((t_ns, rr_ms))
        while len(self._entries) > self.capacity:
            self._entries.popleft()
        return True

    def values(self, now_ns: int) -> list[float]:
        horizon = now_ns - self.window_ns
        return [rr for t, rr in self._entries if t >= horizon]

    @property
    def last(self) -> float | None:
        return self._entries[-1][1] if self._entries else None


def compute_hr(rr_ms) -> float:
    """Mean heart rate in bpm over an RR window."""
    rr = list(rr_ms)
    if not rr:
        raise EmptyWindow("heart rate needs at least one interval")
    return 60000.0 / float(np.mean(rr))


def compute_sdnn(rr_ms) -> float:
    rr = list(rr_ms)
    if len(rr) < 2:
        raise InsufficientData("SDNN needs at least two intervals")
    return float(np.std(rr, ddof=1))


def compute_rmssd(rr_ms) -> float:
    rr = list(rr_ms)
    if len(rr) < 2:
        raise InsufficientData("RMSSD needs at least two intervals")
    d = np.diff(rr)
    return float(np.sqrt(np.mean(d * d)))


def compute_pnn50(rr_ms) -> float:
    rr = list(rr_ms)
    if len(rr) < 2:
        raise InsufficientData("pNN50 needs at least two intervals")
    d = np.abs(np.diff(rr))
    return 100.0 * float(np.count_nonzero(d > 50.0)) / d.size


@dataclass(frozen=True)
class Discrepancy:
    abs_diff: float
    rel_diff: float


def feature_discrepancy(device_value: float, computed_value: float
                        ) -> Discrepancy:
    """Absolute and scale-relative difference between two feature values."""
    abs_diff = abs(device_value - computed_value)
    denom = max(abs(device_value), abs(computed_value), DISCREPANCY_EPS)
    return Discrepancy(abs_diff, abs_diff / denom)
