"""HRV statistics against independent direct-formula oracles."""

import math
import random

import pytest
from hypothesis import given, strategies as st

from physiobus.errors import (
    EmptyWindow,
    InsufficientData,
    NonMonotonicInput,
)
from physiobus.hrv import (
    Discrepancy,
    RrWindow,
    compute_hr,
    compute_pnn50,
    compute_rmssd,
    compute_sdnn,
    feature_discrepancy,
    rr_from_peaks,
)

S = 1_000_000_000


# -- independent oracles (plain python, no numpy) --------------------------

def oracle_hr(rr):
    return 60000.0 / (math.fsum(rr) / len(rr))


def oracle_sdnn(rr):
    mean = math.fsum(rr) / len(rr)
    return math.sqrt(math.fsum((x - mean) ** 2 for x in rr) / (len(rr) - 1))


def oracle_rmssd(rr):
    diffs = [b - a for a, b in zip(rr, rr[1:])]
    return math.sqrt(math.fsum(d * d for d in diffs) / len(diffs))


def oracle_pnn50(rr):
    diffs = [abs(b - a) for a, b in zip(rr, rr[1:])]
    return 100.0 * sum(1 for d in diffs if d > 50.0) / len(diffs)


def random_windows(seed, count, max_n=500):
    rng = random.Random(seed)
    for _ in range(count):
        n = rng.randint(2, max_n)
        yield [rng.uniform(300.0, 2000.0) for _ in range(n)]


# -- worked examples --------------------------------------------------------

def test_hr_examples():
    assert compute_hr([1000.0]) == 60.0
    assert compute_hr([800.0, 800.0, 800.0]) == 75.0
    assert compute_hr([600.0, 1000.0]) == 75.0


def test_sdnn_examples():
    assert compute_sdnn([800.0, 800.0, 800.0]) == 0.0
    assert compute_sdnn([700.0, 900.0]) == pytest.approx(
        141.4213562373095, rel=1e-12)


def test_rmssd_examples():
    assert compute_rmssd([800.0, 800.0, 800.0]) == 0.0
    assert compute_rmssd([800.0, 850.0, 900.0]) == pytest.approx(50.0)


def test_pnn50_examples():
    assert compute_pnn50([800.0, 850.0, 900.0]) == 0.0  # diffs exactly 50
    assert compute_pnn50([800.0, 851.0]) == 100.0
    assert compute_pnn50([800.0, 800.0, 800.0]) == 0.0


def test_insufficient_data_and_empty_window():
    with pytest.raises(EmptyWindow):
        compute_hr([])
    for fn in (compute_sdnn, compute_rmssd, compute_pnn50):
        with pytest.raises(InsufficientData):
            fn([1000.0])


# -- oracle equivalence ------------------------------------------------------

def test_oracle_equivalence_random_windows():
    for rr in random_windows(seed=77, count=300):
        assert compute_hr(rr) == pytest.approx(oracle_hr(rr), rel=1e-9)
        assert compute_sdnn(rr) == pytest.approx(oracle_sdnn(rr), rel=1e-9,
                                                 abs=1e-9)
        assert compute_rmssd(rr) == pytest.approx(oracle_rmssd(rr), rel=1e-9,
                                                  abs=1e-9)
        assert compute_pnn50(rr) == pytest.approx(oracle_pnn50(rr), rel=1e-9,
                                                  abs=1e-12)


rr_windows = st.lists(st.floats(min_value=300.0, max_value=2000.0),
                      min_size=2, max_size=60)


@given(rr_windows, st.floats(min_value=-200.0, max_value=200.0))
def test_shift_invariance(rr, shift):
    shifted = [x + shift for x in rr]
    assert compute_sdnn(shifted) == pytest.approx(compute_sdnn(rr), abs=1e-9)
    assert compute_rmssd(shifted) == pytest.approx(compute_rmssd(rr), abs=1e-9)
    assert compute_pnn50(shifted) == pytest.approx(compute_pnn50(rr), abs=1e-9)


@given(rr_windows)
def test_reversal_invariance(rr):
    rev = list(reversed(rr))
    assert compute_rmssd(rev) == pytest.approx(compute_rmssd(rr), abs=1e-9)
    assert compute_pnn50(rev) == pytest.approx(compute_pnn50(rr), abs=1e-9)


@given(rr_windows, st.randoms(use_true_random=False))
def test_sdnn_permutation_invariance(rr, rand):
    shuffled = list(rr)
    rand.shuffle(shuffled)
    assert compute_sdnn(shuffled) == pytest.approx(compute_sdnn(rr), abs=1e-9)


def test_range_properties():
    for rr in random_windows(seed=31, count=100, max_n=50):
        assert 0.0 <= compute_pnn50(rr) <= 100.0
        assert compute_sdnn(rr) >= 0.0
        assert compute_rmssd(rr) >= 0.0
        assert 30.0 < compute_hr(rr) < 200.0


# -- rr extraction -----------------------------------------------------------

def test_rr_from_peaks_basic():
    series = rr_from_peaks([0, 1 * S, 2 * S])
    assert series.values == [1000.0, 1000.0]
    assert series.rejected == 0


def test_rr_from_peaks_single_peak():
    series = rr_from_peaks([5 * S])
    assert series.values == []
    assert series.rejected == 0


def test_rr_from_peaks_drops_long_gap():
    series = rr_from_peaks([0, 1 * S, 4 * S, 5 * S])
    assert series.values == [1000.0, 1000.0]
    assert series.rejected == 1


def test_rr_from_peaks_rejects_decreasing():
    with pytest.raises(NonMonotonicInput):
        rr_from_peaks([2 * S, 1 * S])


# -- windowing ---------------------------------------------------------------

def test_rr_window_prunes_by_time():
    w = RrWindow(window_s=10.0)
    w.add(1 * S, 800.0)
    w.add(5 * S, 820.0)
    w.add(12 * S, 840.0)
    assert w.values(now_ns=11 * S) == [800.0, 820.0, 840.0]
    assert w.values(now_ns=15 * S) == [820.0, 840.0]
    assert w.values(now_ns=16 * S) == [840.0]
    assert w.values(now_ns=30 * S) == []
    assert w.last == 840.0


def test_rr_window_gates_range_and_counts():
    w = RrWindow(window_s=60.0)
    assert not w.add(1 * S, 3000.0)
    assert not w.add(2 * S, 100.0)
    assert w.add(3 * S, 1000.0)
    assert w.rejected == 2


def test_rr_window_capacity_bound():
    w = RrWindow(window_s=1e6, capacity=5)
    for i in range(10):
        w.add(i * S, 1000.0 + i)
    assert w.values(now_ns=10 * S) == [1005.0, 1006.0, 1007.0, 1008.0, 1009.0]


def test_rr_window_requires_time_order():
    w = RrWindow()
    w.add(5 * S, 1000.0)
    with pytest.raises(NonMonotonicInput):
        w.add(4 * S, 1000.0)


# -- discrepancy -------------------------------------------------------------

def test_discrepancy_examples():
    assert feature_discrepancy(72.0, 72.0) == Discrepancy(0.0, 0.0)
    d = feature_discrepancy(72.0, 75.0)
    assert d.abs_diff == pytest.approx(3.0)
    assert d.rel_diff == pytest.approx(0.04)
    assert feature_discrepancy(0.0, 0.0) == Discrepancy(0.0, 0.0)
