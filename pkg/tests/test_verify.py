import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from film.verify import (
    ks_statistic,
    ks_test,
    ks_threshold,
    reconstruct_demo,
    sampled_columns,
    smooth_signal,
    theorem2_deviations,
    verify_theorem1,
    verify_theorem2,
    verify_theorem3,
)


def ks_brute_force(a, b):
    # evaluate both empirical CDFs on a fine grid covering every sample point
    pts = np.union1d(a, b)
    return max(abs(np.mean(a <= p) - np.mean(b <= p)) for p in pts)


def test_ks_examples():
    assert ks_statistic([1, 2, 3], [1, 2, 3]) == 0
    assert ks_statistic([0, 0], [1, 1]) == 1.0
    assert ks_statistic([0, 1], [0.5, 1]) == 0.5
    with pytest.raises(ValueError):
        ks_statistic([], [1])


@settings(max_examples=60)
@given(
    a=st.lists(st.integers(-5, 5), min_size=1, max_size=30),
    b=st.lists(st.integers(-5, 5), min_size=1, max_size=30),
)
def test_ks_matches_brute_force_and_is_symmetric(a, b):
    a, b = np.array(a, float), np.array(b, float)
    d = ks_statistic(a, b)
    assert d == pytest.approx(ks_brute_force(a, b), abs=1e-12)
    assert d == ks_statistic(b, a)
    assert 0 <= d <= 1
    # any common strictly increasing transform leaves it unchanged
    assert ks_statistic(np.exp(a), np.exp(b)) == pytest.approx(d, abs=1e-12)
    assert ks_statistic(a**3 + 2 * a, b**3 + 2 * b) == pytest.approx(d, abs=1e-12)


def test_ks_threshold():
    assert ks_threshold(0.01, 100, 100) == pytest.approx(0.2302, abs=1e-4)
    assert ks_threshold(0.01, 400, 400) < ks_threshold(0.01, 100, 100)
    c = math.sqrt(-0.5 * math.log(0.05 / 2))
    assert ks_threshold(0.05, 37, 37) == pytest.approx(c * math.sqrt(2 / 37), rel=1e-14)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            ks_threshold(bad, 10, 10)
    with pytest.raises(ValueError):
        ks_threshold(0.1, 0, 10)


def test_ks_decision():
    rng = np.random.default_rng(0)
    same = ks_test(rng.normal(size=500), rng.normal(size=500))
    shifted = ks_test(rng.normal(size=500), rng.normal(1.0, 1, size=500))
    assert not same.reject and shifted.reject
    assert shifted.reject == (shifted.statistic > shifted.threshold)


def test_theorem1_default():
    r = verify_theorem1()
    assert r.passed and -1.2 <= r.measured <= -0.4


def test_theorem1_smooth_signal_much_steeper():
    r = verify_theorem1(signal=smooth_signal(4096))
    assert r.measured < -1.0


def test_theorem1_constant_is_vacuous():
    r = verify_theorem1(signal=np.full(512, 3.0))
    assert r.passed and "degenerate" in r.detail


def test_theorem1_needs_increasing_orders():
    with pytest.raises(ValueError):
        verify_theorem1(orders=(16, 32))
    with pytest.raises(ValueError):
        verify_theorem1(orders=(16, 64, 32))


def test_theorem2():
    r = verify_theorem2()
    assert r.passed and abs(r.measured - 0.5) <= 0.1
    zero = verify_theorem2(sigma=0.0)
    assert zero.passed and "degenerate" in zero.detail
    one = theorem2_deviations((4, 8, 16), 50, 0.1, 3)
    two = theorem2_deviations((4, 8, 16), 50, 0.2, 3)
    np.testing.assert_allclose(two, 2 * one, rtol=1e-10)


def test_theorem3_cases():
    r = verify_theorem3(d=64, n=64, s=16, decay=1e-3)
    assert r.passed and r.measured <= 2 * 1e-3 * math.sqrt(48 * 64) + 1e-15
    assert verify_theorem3(decay=0.0).passed
    assert verify_theorem3(s=64).passed
    assert all(verify_theorem3(seed=k).passed for k in range(10))


def test_sampled_columns():
    assert sampled_columns(16, 64) == 20
    assert sampled_columns(40, 64) == 0
    assert sampled_columns(2, 10) == 8
    assert sampled_columns(16, 64, k=6, epsilon=0.5) == 48


def test_reconstruct_demo():
    r = reconstruct_demo(1024, 128)
    assert r.passed and r.measured < 0.05
