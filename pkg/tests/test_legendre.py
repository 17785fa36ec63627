import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import legendre as npleg

from film.legendre import (
    build_eval_matrix,
    build_transition,
    discretize_bilinear,
    legendre_values,
    lpu,
    project,
    reconstruct,
    round_trip_error,
)


def transition_by_loops(order):
    # direct element-wise oracle
    a = np.zeros((order, order))
    b = np.zeros(order)
    for n in range(order):
        b[n] = (2 * n + 1) * (-1) ** n
        for k in range(order):
            a[n, k] = (2 * n + 1) * ((-1) ** (n - k) if k <= n else 1)
    return a, b


def test_transition_small_orders():
    t1 = build_transition(1)
    assert t1.a_matrix.tolist() == [[1.0]] and t1.b_vector.tolist() == [1.0]
    t2 = build_transition(2)
    assert t2.a_matrix.tolist() == [[1, 1], [-3, 3]]
    assert t2.b_vector.tolist() == [1, -3]
    t3 = build_transition(3)
    assert t3.a_matrix[2].tolist() == [5, -5, 5]
    assert t3.b_vector[2] == 5


@pytest.mark.parametrize("order", [1, 4, 17, 64])
def test_transition_matches_loop_oracle(order):
    a, b = transition_by_loops(order)
    t = build_transition(order)
    np.testing.assert_array_equal(t.a_matrix, a)
    np.testing.assert_array_equal(t.b_vector, b)


def test_transition_rejects_zero_order():
    with pytest.raises(ValueError):
        build_transition(0)


def test_bilinear_scalar_case():
    d = discretize_bilinear(build_transition(1), 0.5)
    assert d.ad[0, 0] == pytest.approx(0.6, abs=1e-15)
    assert d.bd[0] == pytest.approx(0.4, abs=1e-15)


def test_bilinear_small_step_matches_generator():
    d = discretize_bilinear(build_transition(1), 1e-4)
    assert (d.ad[0, 0] - 1.0) / 1e-4 == pytest.approx(-1.0, rel=1e-3)


def _expm(m, terms=40):
    out = np.eye(m.shape[0])
    term = np.eye(m.shape[0])
    for k in range(1, terms):
        term = term @ m / k
        out = out + term
    return out


def test_bilinear_close_to_exact_exponential():
    # second-order agreement with the matrix exponential for a small step
    t = build_transition(6)
    dt = 1e-3
    d = discretize_bilinear(t, dt)
    exact = _expm(-t.a_matrix * dt)
    assert np.abs(d.ad - exact).max() < 5e-6


def test_bilinear_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        discretize_bilinear(build_transition(2), 0.0)


def test_project_constant_input_by_hand():
    d = discretize_bilinear(build_transition(1), 0.5)
    c = project(np.ones(3), d).coeffs[:, 0]
    np.testing.assert_allclose(c, [0.4, 0.64, 0.784], atol=1e-15)


def test_project_zero_signal():
    assert not project(np.zeros(20), lpu(5, 20)).coeffs.any()


def test_project_reports_bad_index():
    x = np.ones(10)
    x[7] = np.nan
    with pytest.raises(ValueError, match="7"):
        project(x, lpu(4, 10))


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    length=st.integers(2, 40),
    order=st.integers(1, 12),
    a=st.floats(-3, 3),
    b=st.floats(-3, 3),
)
def test_project_is_linear(seed, length, order, a, b):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, length))
    d = lpu(order, length)
    lhs = project(a * x + b * y, d).coeffs
    rhs = a * project(x, d).coeffs + b * project(y, d).coeffs
    np.testing.assert_allclose(lhs, rhs, atol=1e-9 * (1 + np.abs(rhs).max()))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), length=st.integers(2, 40), cut=st.integers(1, 40))
def test_project_prefix_consistency(seed, length, cut):
    cut = min(cut, length)
    x = np.random.default_rng(seed).standard_normal(length)
    d = lpu(6, length)
    np.testing.assert_array_equal(project(x[:cut], d).coeffs, project(x, d).coeffs[:cut])


def test_project_channels_independent():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 50))
    d = lpu(8, 50)
    batched = project(x, d).coeffs
    for k in range(3):
        np.testing.assert_allclose(batched[k], project(x[k], d).coeffs, rtol=0, atol=1e-12)


@pytest.mark.parametrize("order", [1, 2, 7, 30])
def test_legendre_values_match_numpy(order):
    x = np.linspace(-1, 1, 33)
    ref = np.stack([npleg.legval(x, np.eye(order)[n]) for n in range(order)], axis=-1)
    np.testing.assert_allclose(legendre_values(x, order), ref, atol=1e-12)


def test_eval_matrix_grid():
    e = build_eval_matrix(2, 2)
    np.testing.assert_allclose(e, [[1.0, 0.5], [1.0, -0.5]])
    e = build_eval_matrix(37, 9)
    assert np.all(e[:, 0] == 1.0)
    x = 1.0 - (2.0 * np.arange(37) + 1.0) / 37
    np.testing.assert_allclose(e[:, 3], 0.5 * (5 * x**3 - 3 * x), atol=1e-14)


def test_reconstruct_basics():
    e = build_eval_matrix(10, 4)
    np.testing.assert_array_equal(reconstruct(np.eye(4)[0], e, 10), np.ones(10))
    assert not reconstruct(np.zeros(4), e, 3).any()
    assert reconstruct(np.arange(4.0), e, 3).shape == (3,)
    with pytest.raises(ValueError):
        reconstruct(np.zeros(4), e, 11)


def test_round_trip_sine():
    t = np.arange(1024)
    assert round_trip_error(np.sin(2 * np.pi * t / 1024), 128) < 0.05


def test_round_trip_polynomial_with_history():
    # a degree-5 polynomial over the whole history, viewed through the last window
    length, order = 256, 8
    u = np.linspace(-4, 1, 5 * length)
    x = 0.3 * u**5 - u**3 + 2 * u**2 - u + 0.5
    coeffs = project(x, lpu(order, length)).coeffs[-1]
    rec = reconstruct(coeffs, build_eval_matrix(length, order), length)
    tail = x[-length:]
    assert np.linalg.norm(rec - tail) / np.linalg.norm(tail) < 1e-2


def test_round_trip_improves_with_order():
    x = np.cumsum(np.random.default_rng(3).uniform(-1, 1, 2048)) / 2048
    errs = [round_trip_error(x, n) for n in (16, 64, 256)]
    assert errs[0] > errs[1] > errs[2]
