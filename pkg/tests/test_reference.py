"""The brute-force references must be right before anything else is tested
against them, so these pin them to tiny hand-worked cases."""

import numpy as np
import pytest

from qcalib.reference import pinball_argmin_scan, sorted_left_quantile


def test_scan_three_values_median():
    # G(1) = (0 + .5*1 + .5*2)/3 = 1/2, G(2) = (.5 + 0 + .5)/3 = 1/3,
    # G(3) = (.5*2 + .5*1 + 0)/3 = 1/2; unique minimum at 2
    res = pinball_argmin_scan([1.0, 2.0, 3.0], 0.5)
    assert res.value == 2.0
    assert res.objective_curve == (
        (1.0, 0.5),
        (2.0, 1.0 / 3.0),
        (3.0, 0.5),
    )


def test_scan_tie_prefers_smallest():
    # {0, 10} at the median: G(0) = G(10) = 2.5, smallest minimizer wins
    res = pinball_argmin_scan([0.0, 10.0], 0.5)
    assert res.value == 0.0
    assert res.objective_curve == ((0.0, 2.5), (10.0, 2.5))


def test_scan_four_values_low_level():
    # tau=0.25 on {1,2,3,4}: G(1) = G(2) = 0.375, G(3) = 0.625; pick 1
    res = pinball_argmin_scan([1.0, 2.0, 3.0, 4.0], 0.25)
    assert res.value == 1.0
    objs = dict(res.objective_curve)
    assert objs[1.0] == 0.375
    assert objs[2.0] == 0.375
    assert objs[3.0] == 0.625


def test_scan_deduplicates_candidates():
    res = pinball_argmin_scan([5.0, 5.0, 5.0, 7.0], 0.5)
    assert res.value == 5.0
    assert len(res.objective_curve) == 2


def test_sorted_rank_examples():
    assert sorted_left_quantile([1.0, 2.0, 3.0], 0.5) == 2.0
    assert sorted_left_quantile([3.0, 1.0, 2.0], 0.5) == 2.0  # input order free
    assert sorted_left_quantile([1.0, 2.0, 3.0], 1.0 / 3.0) == 1.0
    assert sorted_left_quantile([1.0, 2.0, 3.0, 4.0], 0.25) == 1.0
    assert sorted_left_quantile([0.0, 10.0], 0.5) == 0.0
    assert sorted_left_quantile([4.0], 0.99) == 4.0


def test_sorted_rank_exact_decimal_levels():
    # k/m comparisons keep grid levels honest where ceil(tau*m) overshoots:
    # 0.14 * 50 rounds to 7.000000000000001, but fl(7/50) >= 0.14 holds
    values = list(range(50))
    assert sorted_left_quantile(values, 0.14) == 6.0  # rank 7, 1-based
    values = list(range(100))
    assert sorted_left_quantile(values, 0.07) == 6.0  # rank 7


def test_both_references_agree_everywhere():
    rng = np.random.default_rng(7)
    grid = np.arange(1, 100) / 100.0
    for _ in range(60):
        m = int(rng.integers(1, 41))
        vals = rng.normal(0.0, 5.0, m)
        if rng.integers(0, 2):
            vals = np.round(vals)  # force ties
        for tau in grid:
            assert sorted_left_quantile(vals, tau) == pinball_argmin_scan(vals, tau).value


def test_reference_rejects_bad_input():
    with pytest.raises(ValueError):
        sorted_left_quantile([], 0.5)
    with pytest.raises(ValueError):
        sorted_left_quantile([1.0], 0.0)
    with pytest.raises(ValueError):
        pinball_argmin_scan([1.0], 1.0)
