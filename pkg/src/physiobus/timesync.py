"""Device-clock to bus-clock offset estimation.

Each incoming sensor message pairs a device-side timestamp with the bus
receipt time. The observed offset ``recv_ns - device_ns`` equals the true
clock offset plus a nonnegative transport delay, so the *minimum* observed
offset over a sliding window is the tightest available bound on the true
offset. A window (default 256 observations) lets slow drift age out.

One estimator per sensor stream, owned by whichever node consumes the
stream; no shared state.
"""

from __future__ import annotations

from collections import deque

from .errors import NoObservations

DEFAULT_WINDOW = 256


class OffsetEstimator:
    """Min-filter over the last `window` observed offsets."""

    def __init__(self, window: int = DEFAULT_WINDOW):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self._offsets: deque[int] = deque(maxlen=window)

    @property
    def count(self) -> int:
        return len(self._offsets)

    @property
    def estimate_ns(self) -> int:
        if not self._offsets:
            raise NoObservations("no (device, receive) pairs observed yet")
        return min(self._offsets)

    def observe(self, device_ns: int, recv_ns: int) -> int:
        """Record one (device timestamp, receipt time) pair; returns the
        updated estimate."""
        self._offsets.append(recv_ns - device_ns)
        return self.estimate_ns

    def to_bus_time(self, device_ns: int) -> int:
        """Map a device-clock timestamp onto the bus clock."""
        return device_ns + self.estimate_ns
