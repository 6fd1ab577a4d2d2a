import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from l2pselect.nnls import NnlsBudgetWarning, e_step_objective, nnls, solve_e_step
from l2pselect.space import build_label_matrix


def brute_force_nnls(a, b, free=None):
    """Best KKT point over every choice of active set (independent oracle)."""
    n = a.shape[1]
    free = np.zeros(n, dtype=bool) if free is None else free
    constrained = np.flatnonzero(~free)
    best, best_x = np.inf, None
    for k in range(len(constrained) + 1):
        for subset in itertools.combinations(constrained, k):
            cols = np.r_[np.flatnonzero(free), list(subset)].astype(int)
            x = np.zeros(n)
            if cols.size:
                x[cols] = np.linalg.lstsq(a[:, cols], b, rcond=None)[0]
            if np.any(x[~free] < -1e-12):
                continue
            x[~free] = np.maximum(x[~free], 0)
            val = np.sum((a @ x - b) ** 2)
            if val < best:
                best, best_x = val, x
    return best_x, best


def objective(a, b, x):
    return float(np.sum((a @ x - b) ** 2))


def test_identity_clips():
    x, ok, _ = nnls(np.eye(2), np.array([1.0, -2.0]))
    np.testing.assert_array_equal(x, [1.0, 0.0])
    assert ok


def test_feasible_unconstrained_optimum():
    x, ok, _ = nnls(np.array([[1.0], [1.0]]), np.array([1.0, 1.0]))
    np.testing.assert_allclose(x, [1.0], rtol=1e-15)


def test_random_6x4_matches_enumeration():
    rng = np.random.default_rng(64)
    for _ in range(20):
        a = rng.standard_normal((6, 4))
        b = rng.standard_normal(6)
        x, ok, _ = nnls(a, b)
        ref_x, ref = brute_force_nnls(a, b)
        assert ok and np.all(x >= 0)
        np.testing.assert_allclose(x, ref_x, atol=1e-8)
        assert objective(a, b, x) == pytest.approx(ref, rel=1e-8, abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 9), st.integers(1, 7), st.integers(0, 2**31 - 1))
def test_kkt_and_exact_feasibility(rows, cols, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((rows, cols))
    b = rng.standard_normal(rows)
    x, ok, _ = nnls(a, b)
    assert ok
    assert np.all(x >= 0)
    grad = a.T @ (b - a @ x)  # negative gradient of half the objective
    scale = np.linalg.norm(a, axis=0) * max(np.linalg.norm(b), 1.0)
    assert np.all(grad <= 1e-9 * scale)
    passive = x > 0
    assert np.all(np.abs(grad[passive]) <= 1e-9 * scale[passive])


def test_row_scaled_problem_matches_enumeration():
    # rows weighted over nine orders of magnitude, as in late solver iterations
    rng = np.random.default_rng(9)
    for _ in range(30):
        a = rng.standard_normal((7, 5)) * np.logspace(0, 9, 7)[:, None]
        b = rng.standard_normal(7) * np.logspace(0, 9, 7)
        x, ok, _ = nnls(a, b)
        _, ref = brute_force_nnls(a, b)
        assert objective(a, b, x) <= ref * (1 + 1e-8) + 1e-20 * (b @ b)


def test_free_variables():
    rng = np.random.default_rng(10)
    for _ in range(10):
        a = rng.standard_normal((8, 6))
        b = rng.standard_normal(8)
        free = np.array([True, True, False, False, False, False])
        x, ok, _ = nnls(a, b, free=free)
        ref_x, ref = brute_force_nnls(a, b, free)
        assert ok and np.all(x[~free] >= 0)
        np.testing.assert_allclose(x, ref_x, atol=1e-8)


def test_warm_start_never_worse():
    rng = np.random.default_rng(11)
    for _ in range(10):
        a = rng.standard_normal((5, 8))
        b = rng.standard_normal(5)
        x0 = np.abs(rng.standard_normal(8))
        x, _, _ = nnls(a, b, x0=x0)
        assert objective(a, b, x) <= objective(a, b, x0) + 1e-12
        _, ref = brute_force_nnls(a, b)
        assert objective(a, b, x) == pytest.approx(ref, abs=1e-10)


def test_budget_exhaustion_warns():
    rng = np.random.default_rng(12)
    a = rng.standard_normal((6, 5))
    b = a @ np.ones(5)
    with pytest.warns(NnlsBudgetWarning):
        x, ok, it = nnls(a, b, max_iterations=1)
    assert not ok and it == 1 and np.all(x >= 0)


def test_degenerate_inputs():
    x, ok, _ = nnls(np.zeros((3, 2)), np.ones(3))
    np.testing.assert_array_equal(x, 0)
    x, ok, _ = nnls(np.ones((3, 2)), np.zeros(3))
    np.testing.assert_array_equal(x, 0)
    with pytest.raises(ValueError):
        nnls(np.ones((3, 2)), np.ones(4))


def test_e_step_unconstrained_optimum_feasible():
    y = build_label_matrix([0, 1, 2, 0], 3)
    e, ok = solve_e_step(np.ones(4), np.eye(4), -y, y)
    np.testing.assert_allclose(e, y, atol=1e-14)
    assert ok


def test_e_step_zero_h():
    y = build_label_matrix([0, 1, 1], 2)
    rng = np.random.default_rng(13)
    e, _ = solve_e_step(np.ones(2), rng.standard_normal((2, 3)), np.zeros((2, 2)), y)
    np.testing.assert_array_equal(e, 0)


def projected_gradient_e_step(lam, l, h, y, iterations=200_000):
    """Accelerated projected gradient on Z = Y * E >= 0 (independent oracle)."""
    a = [lam[:, None] * l * y[:, j] for j in range(y.shape[1])]
    z = np.zeros(y.shape)
    for j in range(y.shape[1]):
        aj, bj = a[j], -lam * h[:, j]
        step = 1.0 / np.linalg.norm(aj, 2) ** 2
        x = prev = np.zeros(y.shape[0])
        for k in range(1, iterations + 1):
            v = x + (k - 1) / (k + 2) * (x - prev)
            prev = x
            x = np.maximum(v - step * aj.T @ (aj @ v - bj), 0.0)
        z[:, j] = x
    return y * z


def test_e_step_matches_projected_gradient():
    rng = np.random.default_rng(14)
    m0, m, c = 5, 4, 2
    lam = rng.uniform(0.5, 2.0, m0)
    l = rng.standard_normal((m0, m))
    h = rng.standard_normal((m0, c))
    y = build_label_matrix([0, 1, 0, 1], c)
    e, _ = solve_e_step(lam, l, h, y)
    ref = projected_gradient_e_step(lam, l, h, y, iterations=20_000)
    assert np.all(y * e >= 0)
    assert e_step_objective(lam, l, h, e) == pytest.approx(e_step_objective(lam, l, h, ref), rel=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(2, 7), st.integers(2, 4), st.integers(0, 2**31 - 1))
def test_e_step_properties(m0, m, c, seed):
    rng = np.random.default_rng(seed)
    lam = rng.uniform(0, 3, m0)
    lam[rng.random(m0) < 0.2] = 0.0
    l = rng.standard_normal((m0, m))
    h = rng.standard_normal((m0, c))
    y = build_label_matrix(rng.integers(0, c, m), c)
    e_in = y * np.abs(rng.standard_normal((m, c)))
    e, _ = solve_e_step(lam, l, h, y, e0=e_in)
    # exact feasibility, descent from the incoming slack
    assert np.all(y * e >= 0)
    assert e_step_objective(lam, l, h, e) <= e_step_objective(lam, l, h, e_in) * (1 + 1e-12) + 1e-12
    # column decoupling: every column alone gives the same answer
    for j in range(c):
        ej, _ = solve_e_step(lam, l, h[:, [j]], y[:, [j]])
        cold, _ = solve_e_step(lam, l, h, y)
        assert e_step_objective(lam, l, h[:, [j]], ej) == pytest.approx(
            e_step_objective(lam, l, h[:, [j]], cold[:, [j]]), rel=1e-9, abs=1e-12)


def test_e_step_rejects_negative_weights():
    y = build_label_matrix([0, 1], 2)
    with pytest.raises(ValueError):
        solve_e_step(np.array([-1.0]), np.ones((1, 2)), np.zeros((1, 2)), y)
