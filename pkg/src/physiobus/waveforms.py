"""Synthetic cardiac waveforms with exact ground truth.

Signals are sums of per-beat Gaussian templates plus white Gaussian noise.
Everything is a pure function of (config, sample index): beat placement
comes from a dedicated seeded RNG stream, and noise is a counter-based
generator (splitmix64 + Box-Muller) indexed by absolute sample number, so
any block decomposition of the same signal is bit-identical to a one-shot
render. Each beat only touches samples inside its fixed template support,
which keeps the contribution of a beat to a sample independent of block
boundaries.

Template constants (amplitude, gaussian sigma in ms, offset from the beat
time in ms) are the single source of truth for both the simulators and the
detector's group-delay calibration.
"""

from __future__ import annotations

import bisect
import math

import numpy as np

# (amplitude, sigma_ms, offset_ms); ECG amplitudes in mV
ECG_WAVES = (
    (0.15, 25.0, -80.0),   # P
    (-0.10, 10.0, -20.0),  # Q
    (1.00, 12.0, 0.0),     # R
    (-0.25, 10.0, 20.0),   # S
    (0.35, 40.0, 120.0),   # T
)

# systolic + dicrotic pulse, arbitrary units
PPG_WAVES = (
    (1.00, 90.0, 0.0),
    (0.35, 120.0, 250.0),
)

RR_CLAMP_MS = (300.0, 2000.0)
FIRST_BEAT_OFFSET_MS = 500.0
_SUPPORT_SIGMAS = 5.0

_NS = 1_000_000_000


def template_support_ms(waves) -> tuple[float, float]:
    lo = min(off - _SUPPORT_SIGMAS * sd for _, sd, off in waves)
    hi = max(off + _SUPPORT_SIGMAS * sd for _, sd, off in waves)
    return lo, hi


def template_value(waves, t_ms: float) -> float:
    """Template amplitude `t_ms` milliseconds after the beat time."""
    return sum(a * math.exp(-((t_ms - off) ** 2) / (2.0 * sd * sd))
               for a, sd, off in waves)


# ---------------------------------------------------------------------------
# counter-based noise: random access, block-split invariant

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = (x + _SM_GAMMA).astype(np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _SM_M1
    z = (z ^ (z >> np.uint64(27))) * _SM_M2
    return z ^ (z >> np.uint64(31))


def gaussian_noise(seed: int, i0: int, i1: int, sd: float) -> np.ndarray:
    """White Gaussian noise for absolute sample indices [i0, i1)."""
    n = i1 - i0
    if n <= 0 or sd == 0.0:
        return np.zeros(max(n, 0))
    idx = np.arange(i0, i1, dtype=np.uint64)
    base = _splitmix64(np.full(n, np.uint64(seed & 0xFFFFFFFFFFFFFFFF)))
    a = _splitmix64(base + np.uint64(2) * idx)
    b = _splitmix64(base + np.uint64(2) * idx + np.uint64(1))
    # u1 in (0, 1], u2 in [0, 1)
    u1 = ((a >> np.uint64(11)).astype(np.float64) + 1.0) / 9007199254740993.0
    u2 = (b >> np.uint64(11)).astype(np.float64) / 9007199254740992.0
    return sd * np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


# ---------------------------------------------------------------------------
# beat placement

class BeatTrain:
    """Lazily extended list of beat times (ns), seeded and deterministic.

    The first beat sits at a fixed 500 ms so templates are never truncated
    at the start of the record; later beats follow normally distributed RR
    intervals clamped to the physiologic range.
    """

    def __init__(self, mean_hr_bpm: float, rr_jitter_sd_ms: float, seed: int):
        self._mean_rr_ms = 60000.0 / mean_hr_bpm
        self._sd_ms = rr_jitter_sd_ms
        self._rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 0x52])
        self._times_ns: list[int] = [int(FIRST_BEAT_OFFSET_MS * 1e6)]

    def _extend_to(self, t_ns: int) -> None:
        while self._times_ns[-1] <= t_ns:
            rr_ms = float(self._rng.normal(self._mean_rr_ms, self._sd_ms))
            rr_ms = min(max(rr_ms, RR_CLAMP_MS[0]), RR_CLAMP_MS[1])
            self._times_ns.append(self._times_ns[-1] + int(round(rr_ms * 1e6)))

    def between(self, t0_ns: int, t1_ns: int) -> list[int]:
        """Beat times in [t0_ns, t1_ns)."""
        self._extend_to(t1_ns)
        lo = bisect.bisect_left(self._times_ns, t0_ns)
        hi = bisect.bisect_left(self._times_ns, t1_ns)
        return self._times_ns[lo:hi]


# ---------------------------------------------------------------------------
# full signal model

class SignalModel:
    """Renders signal blocks and reports ground-truth beats for one config."""

    def __init__(self, waves, fs_hz: float, mean_hr_bpm: float,
                 rr_jitter_sd_ms: float, noise_sd: float, seed: int):
        self.waves = waves
        self.fs = fs_hz
        self.noise_sd = noise_sd
        self._noise_seed = (seed & 0xFFFFFFFFFFFFFFFF) ^ 0xA5A5A5A5A5A5A5A5
        self._beats = BeatTrain(mean_hr_bpm, rr_jitter_sd_ms, seed)
        self._lo_ms, self._hi_ms = template_support_ms(waves)

    def beats_between(self, t0_ns: int, t1_ns: int) -> list[int]:
        return self._beats.between(t0_ns, t1_ns)

    def samples(self, i0: int, i1: int) -> np.ndarray:
        """Samples for absolute indices [i0, i1); bit-exact under any split."""
        n = i1 - i0
        out = np.zeros(n)
        if n <= 0:
            return out
        t0_ns = int(round(i0 * _NS / self.fs))
        t1_ns = int(round(i1 * _NS / self.fs))
        lo_ns = int(self._lo_ms * 1e6)
        hi_ns = int(self._hi_ms * 1e6)
        beats = self._beats.between(t0_ns - hi_ns, t1_ns - lo_ns + _NS)
        for b_ns in beats:
            # sample-index support of this beat, independent of the block
            r0 = math.ceil((b_ns + lo_ns) * self.fs / _NS)
            r1 = math.floor((b_ns + hi_ns) * self.fs / _NS) + 1
            r0 = max(r0, i0)
            r1 = min(r1, i1)
            if r0 >= r1:
                continue
            t_ms = (np.arange(r0, r1) * (1e3 / self.fs)) - b_ns / 1e6
            contrib = np.zeros(r1 - r0)
            for amp, sd, off in self.waves:
                contrib += amp * np.exp(-((t_ms - off) ** 2) / (2.0 * sd * sd))
            out[r0 - i0:r1 - i0] += contrib
        if self.noise_sd:
            out += gaussian_noise(self._noise_seed, i0, i1, self.noise_sd)
        return out
