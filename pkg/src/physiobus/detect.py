"""Streaming beat detection on ECG/PPG sample blocks.

Simplified Pan–Tompkins chain with fixed constants:

1. crude bandpass: 5-sample moving average minus 30-sample moving average
   (window counts at 250 Hz, scaled with the actual rate)
2. first difference, then squaring
3. moving-window integration (150 ms for ECG, 300 ms for PPG)
4. candidate = local maximum of the integrated signal above an adaptive
   threshold (half of an EMA over accepted candidate heights, alpha 0.125,
   EMA seeded from the maximum over the first 2 s), with a 200 ms
   refractory between candidates

The first 2 s are buffered and re-scanned once the threshold is seeded, so
beats inside the warm-up window are still reported. Each accepted
candidate is then localized by taking the argmax of the bandpassed signal
over a short look-back window (the integrated maximum lags the beat by
roughly half the integration window) and compensating the short moving
average's group delay; emitted peak times honor the refractory spacing.

All filter state, buffers, and threshold state carry across `feed` calls:
feeding one long block or many short ones yields identical peak times,
provided the caller's per-block `t0_ns` values describe one contiguous
sample grid.
"""

from __future__ import annotations

from collections import deque

import numpy as np
from scipy.signal import lfilter

MA_LONG_AT_250 = 30
MA_SHORT_AT_250 = 5
INTEGRATION_MS_ECG = 150.0
INTEGRATION_MS_PPG = 300.0
REFRACTORY_MS = 200.0
EMA_ALPHA = 0.125
THRESHOLD_FACTOR = 0.5
WARMUP_S = 2.0

_NS = 1_000_000_000


class PeakDetector:
    """Stateful streaming detector; one instance per sensor stream."""

    def __init__(self, fs_hz: float, integration_ms: float = INTEGRATION_MS_ECG):
        if fs_hz <= 0:
            raise ValueError("fs_hz must be positive")
        self.fs = float(fs_hz)
        scale = self.fs / 250.0
        self.n_long = max(2, round(MA_LONG_AT_250 * scale))
        self.n_short = max(1, round(MA_SHORT_AT_250 * scale))
        self.n_int = max(1, round(integration_ms * self.fs / 1000.0))
        self.n_warmup = max(2, round(WARMUP_S * self.fs))
        self.refractory_ns = int(REFRACTORY_MS * 1e6)
        # look-back for localization: integration + smoothing group delays
        self._back_n = self.n_int + self.n_short + 4
        self._delay_comp_ns = int(round((self.n_short - 1) / 2.0
                                        * _NS / self.fs))

        self._b_long = np.full(self.n_long, 1.0 / self.n_long)
        self._b_short = np.full(self.n_short, 1.0 / self.n_short)
        self._b_int = np.full(self.n_int, 1.0 / self.n_int)
        self._z_long = np.zeros(self.n_long - 1)
        self._z_short = np.zeros(self.n_short - 1)
        self._z_diff = np.zeros(1)
        self._z_int = np.zeros(self.n_int - 1)

        self._tail: deque[tuple[int, float]] = deque(
            maxlen=self.n_warmup + self._back_n + 8)
        self._warm_t: list[int] = []
        self._warm_integ: list[float] = []
        self._warmed = False
        self.ema: float | None = None
        self._prev: tuple[int, float] | None = None
        self._rising = False
        self._last_candidate_ns: int | None = None
        self._last_emitted_ns: int | None = None
        self._out: list[int] = []

    @property
    def threshold(self) -> float | None:
        return None if self.ema is None else THRESHOLD_FACTOR * self.ema

    def feed(self, samples, t0_ns: int) -> list[int]:
        """Process one block whose first sample is at bus time `t0_ns`.

        Returns the beat times (ns) decided during this call; decisions can
        lag the input by the warm-up and integration delays.
        """
        x = np.asarray(samples, dtype=float)
        if x.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if x.size == 0:
            return []
        ma_long, self._z_long = lfilter(self._b_long, 1.0, x, zi=self._z_long)
        ma_short, self._z_short = lfilter(self._b_short, 1.0, x,
                                          zi=self._z_short)
        bp = ma_short - ma_long
        diff, self._z_diff = lfilter([1.0, -1.0], 1.0, bp, zi=self._z_diff)
        integ, self._z_int = lfilter(self._b_int, 1.0, diff * diff,
                                     zi=self._z_int)
        step = _NS / self.fs
        for j in range(x.size):
            t = t0_ns + int(round(j * step))
            self._push(t, float(bp[j]), float(integ[j]))
        out, self._out = self._out, []
        return out

    # -- per-sample state machine ---------------------------------------

    def _push(self, t_ns: int, bp_v: float, integ_v: float) -> None:
        self._tail.append((t_ns, bp_v))
        if not self._warmed:
            self._warm_t.append(t_ns)
            self._warm_integ.append(integ_v)
            if len(self._warm_integ) >= self.n_warmup:
                self.ema = max(self._warm_integ)
                self._warmed = True
                for wt, wv in zip(self._warm_t, self._warm_integ):
                    self._scan(wt, wv)
                self._warm_t = []
                self._warm_integ = []
            return
        self._scan(t_ns, integ_v)

    def _scan(self, t_ns: int, v: float) -> None:
        if self._prev is None:
            self._prev = (t_ns, v)
            self._rising = False
            return
        prev_t, prev_v = self._prev
        if self._rising and v < prev_v:
            self._candidate(prev_t, prev_v)
        self._rising = v > prev_v
        self._prev = (t_ns, v)

    def _candidate(self, t_ns: int, height: float) -> None:
        if height <= THRESHOLD_FACTOR * self.ema:
            return
        if (self._last_candidate_ns is not None
                and t_ns - self._last_candidate_ns < self.refractory_ns):
            return
        self._last_candidate_ns = t_ns
        self.ema = EMA_ALPHA * height + (1.0 - EMA_ALPHA) * self.ema
        peak_t = self._localize(t_ns)
        if (self._last_emitted_ns is not None
                and peak_t - self._last_emitted_ns < self.refractory_ns):
            return
        self._last_emitted_ns = peak_t
        self._out.append(peak_t)

    def _localize(self, candidate_ns: int) -> int:
        window_start = candidate_ns - int(round(self._back_n * _NS / self.fs))
        if self._last_emitted_ns is not None:
            window_start = max(window_start, self._last_emitted_ns + 1)
        best_t, best_v = candidate_ns, -np.inf
        for t, v in self._tail:
            if t < window_start or t > candidate_ns:
                continue
            if v > best_v:
                best_t, best_v = t, v
        return best_t - self._delay_comp_ns


def detect_r_peaks(detector: PeakDetector, samples, t0_ns: int) -> list[int]:
    """Functional alias for :meth:`PeakDetector.feed`."""
    return detector.feed(samples, t0_ns)
