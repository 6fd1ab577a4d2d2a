
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from l2pselect.dataset import Dataset, normalize
from l2pselect.linalg import l2p_power, pseudo_inverse, row_norms
from l2pselect.solver import (DEFAULT_P_GRID, SolverConfig, SweepError, floored_weights, iterate,
                              joint_step, rank_features, run, solve_space, sweep_p, u_step)
from l2pselect.space import absorb_bias, build_label_matrix, build_solution_space

from instances import random_instance, random_labels


def small_space(seed, m=6, n=12, c=2):
    rng = np.random.default_rng(seed)
    x = absorb_bias(rng.standard_normal((m, n)))
    y = build_label_matrix(random_labels(rng, m, c), c)
    return x, y, build_solution_space(x, y)


def test_config_validation():
    for bad in (dict(p=0.0), dict(p=2.5), dict(max_outer_iterations=0),
                dict(relative_objective_tolerance=0.0), dict(weight_floor=0.0),
                dict(feature_count_d=0), dict(scheme="other")):
        with pytest.raises(ValueError):
            SolverConfig(**bad)
    assert SolverConfig().to_dict()["p"] == 1.0


def test_u_step_zero_g():
    _, _, space = small_space(0)
    u = u_step(space, np.ones(space.n_rows), np.zeros((space.m0, 2)))
    np.testing.assert_array_equal(u, 0)


def test_u_step_identity_weights_tiny():
    x = np.array([[1.0, 0, 2], [0, 1, 3]])
    space = build_solution_space(x, build_label_matrix([0, 1], 2))
    assert (space.m0, space.n0) == (2, 1)
    k = np.array([[1.0, -2.0], [0.5, 3.0]])
    g = space.scatter_pivot(k)
    # dense normal equations of min ||P U + G||_F^2
    ref = np.linalg.solve(space.P.T @ space.P, -space.P.T @ g)
    for route in ("normal", "reduced", "linear_solve"):
        np.testing.assert_allclose(u_step(space, np.ones(3), k, route), ref, atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_u_step_routes_agree(seed):
    _, _, space = small_space(seed, m=5, n=14, c=3)
    assert space.m0 < space.n0
    rng = np.random.default_rng(seed)
    s = np.exp(rng.uniform(-2, 2, space.n_rows))
    k = rng.standard_normal((space.m0, 3))
    routes = [u_step(space, s, k, r) for r in ("normal", "reduced", "linear_solve")]
    for other in routes[1:]:
        assert np.linalg.norm(other - routes[0]) <= 1e-8 * np.linalg.norm(routes[0])


def test_u_step_minimizes_weighted_objective():
    _, _, space = small_space(3, m=7, n=10)
    rng = np.random.default_rng(3)
    s = np.exp(rng.uniform(-1, 1, space.n_rows))
    k = rng.standard_normal((space.m0, 2))
    g = space.scatter_pivot(k)
    u = u_step(space, s, k)

    def f(v):
        return np.sum(s[:, None] * (space.P @ v + g) ** 2)

    base = f(u)
    for _ in range(20):
        assert f(u + 1e-3 * rng.standard_normal(u.shape)) >= base


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0.3, 0.5, 1.0, 1.5]))
def test_u_step_never_increases_objective(seed, p):
    # the weighted surrogate built at W majorizes ||.||_{2,p}^p with equality at W
    _, y, space = small_space(seed % 1000, m=5, n=9)
    rng = np.random.default_rng(seed)
    u0 = rng.standard_normal((space.n0, 2))
    e = y * np.abs(rng.standard_normal(y.shape))
    w0 = space.compose(u0, e)
    sigma = row_norms(w0) ** (p / 2 - 1)
    u1 = u_step(space, sigma**2, space.N + space.L @ e)
    before, after = l2p_power(w0, p), l2p_power(space.compose(u1, e), p)
    assert after <= before * (1 + 1e-9)


def test_joint_step_beats_alternation():
    _, y, space = small_space(4, m=6, n=11)
    rng = np.random.default_rng(4)
    s = np.exp(rng.uniform(-1, 1, space.n_rows))

    def surrogate(u, e):
        return np.sum(s[:, None] * space.compose(u, e) ** 2)

    u, e, ok = joint_step(space, s, y)
    assert ok and np.all(y * e >= 0)
    for _ in range(10):
        e2 = y * np.abs(rng.standard_normal(y.shape))
        u2 = u_step(space, s, space.N + space.L @ e2)
        assert surrogate(u, e) <= surrogate(u2, e2) * (1 + 1e-10)


def test_floored_weights():
    rows = np.array([[3.0, 4.0], [0.0, 0.0], [1e-20, 0.0]])
    w, norms, eps = floored_weights(rows, 1.0, 1e-12)
    assert eps == 5e-12
    np.testing.assert_allclose(w, [5**-0.5, eps**-0.5, eps**-0.5])


def test_rank_features_examples():
    w = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 1.0], [7.0, 7.0]])  # last row is the bias
    r = rank_features(w, 2)
    np.testing.assert_array_equal(r.row_norms, [0, 3, 1])
    np.testing.assert_array_equal(r.order, [1, 2, 0])
    np.testing.assert_array_equal(r.selected, [1, 2])
    z = rank_features(np.zeros((5, 2)), 3)
    np.testing.assert_array_equal(z.order, [0, 1, 2, 3])


def test_rank_features_random_and_excluded():
    rng = np.random.default_rng(5)
    w = rng.standard_normal((9, 3))
    r = rank_features(w, 4)
    norms = np.sqrt(np.sum(w[:8] ** 2, axis=1))
    assert list(r.order) == sorted(range(8), key=lambda i: (-norms[i], i))
    excluded = np.zeros(8, dtype=bool)
    excluded[r.order[0]] = True
    r2 = rank_features(w, 4, excluded=excluded)
    assert r2.order[-1] == r.order[0] and r.order[0] not in r2.selected
    with pytest.raises(ValueError):
        rank_features(w, 9)
    with pytest.raises(ValueError):
        rank_features(w, 0)


def test_single_point_space():
    y = build_label_matrix([0, 1, 0, 1], 2)
    rng = np.random.default_rng(6)
    x = rng.standard_normal((4, 4))
    space = build_solution_space(x, y)
    assert space.n0 == 0
    state = solve_space(space, y, SolverConfig(p=1.0))
    trace = state.objective_trace
    assert len(trace) >= 1
    assert all(b <= a * (1 + 1e-9) for a, b in zip(trace, trace[1:]))
    np.testing.assert_allclose(state.w, space.compose(state.u, state.e), atol=1e-10)


@pytest.mark.parametrize("scheme,extrapolate", [("joint", True), ("joint", False),
                                                 ("alternating", False)])
@pytest.mark.parametrize("p", [0.5, 1.0])
def test_state_invariants(scheme, extrapolate, p):
    x, y = random_instance(7)
    space = build_solution_space(x, y)
    proj = x @ pseudo_inverse(x)
    config = SolverConfig(p=p, scheme=scheme, extrapolate=extrapolate, max_outer_iterations=60)
    prev = None
    for state, scratch in iterate(space, y, config):
        composed = space.compose(state.u, state.e)
        assert np.linalg.norm(state.w - composed) <= 1e-10 * max(1.0, np.linalg.norm(composed))
        assert np.all(y * state.e >= 0)
        resid = np.linalg.norm(x @ state.w - proj @ (y + state.e))
        assert resid <= 1e-8 * (1 + np.linalg.norm(y))
        np.testing.assert_allclose(scratch.s1, scratch.s[list(space.pivot_columns)])
        np.testing.assert_allclose(scratch.s2, scratch.s[list(space.free_columns)])
        obj = state.objective_trace[-1]
        if prev is not None:
            assert obj <= prev + 1e-9 * (1 + prev)
        # reweighting identity on rows above the floor
        sigma, norms, eps = floored_weights(state.w, p, config.weight_floor)
        keep = norms > eps
        lhs = np.sum((sigma[keep, None] * state.w[keep]) ** 2)
        assert lhs == pytest.approx(l2p_power(state.w[keep], p), rel=1e-10)
        prev = obj


def test_alternating_two_phase_descent():
    # The floor replaces each row norm below eps by eps in the weights and the
    # flush zeroes such rows, so each phase may exceed the exact bound by at
    # most eps**p per row in the power sum.
    x, y = random_instance(8)
    space = build_solution_space(x, y)
    p = 0.5
    config = SolverConfig(p=p, scheme="alternating", extrapolate=False, max_outer_iterations=40)
    prev = slack = None
    for state, scratch in iterate(space, y, config):
        cand = l2p_power(scratch.candidate, p)
        if prev is not None:
            assert cand <= prev + slack + 1e-9 * prev
        now = l2p_power(state.w, p)
        _, _, eps = floored_weights(scratch.candidate, p, config.weight_floor)
        assert now <= cand + space.n_rows * eps**p + 1e-9 * cand
        np.testing.assert_allclose(scratch.g, space.scatter_pivot(scratch.k_mat))
        _, _, eps = floored_weights(state.w, p, config.weight_floor)
        prev, slack = now, space.n_rows * eps**p


def test_margin_constraint_at_convergence():
    x, y = random_instance(9)  # m < n, so X has full row rank
    state = solve_space(build_solution_space(x, y), y, SolverConfig(p=1.0))
    proj = x @ pseudo_inverse(x)
    assert state.converged
    assert np.all(y * (x @ state.w - proj @ y) >= -1e-6)
    assert np.all(y * (x @ state.w) >= 1 - 1e-6)


def planted(seed, m=30, n=20):
    rng = np.random.default_rng(seed)
    labels = random_labels(rng, m, 2)
    feats = rng.standard_normal((m, n))
    feats[:, :3] += 2.0 * np.where(labels == 0, -1, 1)[:, None]
    return normalize(Dataset(feats, labels))


def test_run_is_deterministic_and_ranks():
    ds = planted(10)
    a_state, a_rank = run(ds, SolverConfig(p=0.5, feature_count_d=3))
    b_state, b_rank = run(ds, SolverConfig(p=0.5, feature_count_d=3))
    assert a_state.objective_trace == b_state.objective_trace
    np.testing.assert_array_equal(a_rank.order, b_rank.order)
    assert sorted(a_rank.order) == list(range(20))
    assert len(a_rank.selected) == 3
    with pytest.raises(ValueError):
        run(ds, SolverConfig(feature_count_d=21))


def test_budget_exhaustion_returns_state():
    ds = planted(11)
    state, ranking = run(ds, SolverConfig(p=0.5, max_outer_iterations=2, feature_count_d=3))
    assert not state.converged and state.iteration == 2 and len(ranking.selected) == 3


def test_sweep_single_value_equals_run():
    ds = planted(12)
    cfg = SolverConfig(p=1.0, feature_count_d=4)
    (res,) = sweep_p(ds, [1.0], cfg)
    state, ranking = run(ds, cfg)
    assert res.state.objective_trace == state.objective_trace
    np.testing.assert_array_equal(res.ranking.order, ranking.order)


def test_sweep_default_grid():
    assert DEFAULT_P_GRID == (0.1, 0.3, 0.5, 0.7, 0.9, 1.0)
    results = sweep_p(planted(13), config=SolverConfig(feature_count_d=3))
    assert [r.p for r in results] == list(DEFAULT_P_GRID)


def test_sweep_tags_failing_p():
    with pytest.raises(SweepError) as info:
        sweep_p(planted(14), [0.5, 3.0], SolverConfig(feature_count_d=3))
    assert info.value.p == 3.0
    with pytest.raises(ValueError):
        sweep_p(planted(14), [], SolverConfig(feature_count_d=3))
