"""Reweighted minimization of ``||W||_{2,p}`` over the solution space.

Every outer iteration replaces ``sum_i ||w_i||^p`` by the weighted quadratic
``||Sigma W||_F^2`` with ``Sigma_ii = ||w_i||^{p/2 - 1}`` taken at the current
iterate, and lowers that surrogate over ``(U, E)``. Two schemes are offered:

``"joint"`` (default)
    Minimizes the surrogate over ``U`` and ``E`` together: one nonnegative
    least-squares problem per class in which the entries of ``U`` are
    unconstrained. A safeguarded extrapolation step is then tried and kept
    only if it lowers the true objective.
``"alternating"``
    One closed-form ``U`` update, a reweighting of the pivot rows from the
    resulting candidate, then one sign-constrained NNLS update of ``E``.

Either way each step minimizes a quadratic majorizer of the objective, so
the objective never increases.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterator, List, Optional, Sequence

import numpy as np

from .dataset import Dataset
from .linalg import l2p_norm, min_norm_qr, row_norms, solve_linear, weighted_lstsq
from .nnls import nnls, solve_e_step
from .space import SolutionSpace, absorb_bias, build_label_matrix, build_solution_space

log = logging.getLogger(__name__)

DEFAULT_P_GRID = (0.1, 0.3, 0.5, 0.7, 0.9, 1.0)
SCHEMES = ("joint", "alternating")


@dataclass(frozen=True)
class SolverConfig:
    p: float = 1.0
    max_outer_iterations: int = 200
    relative_objective_tolerance: float = 1e-6
    weight_floor: float = 1e-12
    feature_count_d: int = 10
    scheme: str = "joint"
    extrapolate: bool = True

    def __post_init__(self):
        if not (0.0 < self.p <= 2.0):
            raise ValueError(f"p must lie in (0, 2], got {self.p!r}")
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be at least 1")
        if self.relative_objective_tolerance <= 0:
            raise ValueError("relative_objective_tolerance must be positive")
        if self.weight_floor <= 0:
            raise ValueError("weight_floor must be positive")
        if self.feature_count_d < 1:
            raise ValueError("feature_count_d must be at least 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")

    def to_dict(self):
        return {
            "p": self.p,
            "max_outer_iterations": self.max_outer_iterations,
            "relative_objective_tolerance": self.relative_objective_tolerance,
            "weight_floor": self.weight_floor,
            "feature_count_d": self.feature_count_d,
            "scheme": self.scheme,
            "extrapolate": self.extrapolate,
        }


def floored_weights(rows, p, floor):
    """Reweighting diagonal ``1 / max(||r_i||, eps) ** (1 - p/2)``.

    ``eps = floor * max_i ||r_i||``. Returns the weights, the row norms and
    ``eps``.
    """
    norms = row_norms(rows)
    top = norms.max(initial=0.0)
    eps = floor * top if top > 0 else floor
    return np.maximum(norms, eps) ** (p / 2.0 - 1.0), norms, eps


@dataclass
class IterationScratch:
    """Intermediates of one outer iteration, kept for inspection and tests.

    ``s`` is the squared reweighting diagonal the iteration started from and
    ``s1``/``s2`` its pivot/free parts. The fields from ``g`` on are filled
    by the alternating scheme only.
    """

    s: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    extrapolated: bool = False
    g: Optional[np.ndarray] = None
    k_mat: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    lambda_diag: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    candidate: Optional[np.ndarray] = None  # W after the U update, before E moves


@dataclass
class SolverState:
    u: np.ndarray
    e: np.ndarray
    w: np.ndarray
    sigma_diag: np.ndarray
    objective_trace: List[float] = field(default_factory=list)
    iteration: int = 0
    converged: bool = False
    subproblems_converged: bool = True


@dataclass(frozen=True)
class FeatureRanking:
    """Row norms of ``W`` per real feature and the features in rank order."""

    row_norms: np.ndarray
    order: np.ndarray
    selected: np.ndarray

    def support_size(self, relative=1e-6):
        """Number of features whose row norm exceeds ``relative * max norm``."""
        top = self.row_norms.max(initial=0.0)
        if top == 0.0:
            return 0
        return int(np.count_nonzero(self.row_norms > relative * top))


def u_step(space: SolutionSpace, s, k_mat, route="auto"):
    """Free-row update ``argmin_U ||Sigma (P U + G)||_F^2`` with ``S = Sigma^2``.

    ``k_mat`` is the pivot part of ``G`` (its free part is zero), so the
    minimizer solves ``(M^T S1 M + S2) U = M^T S1 K``.

    ``route="normal"`` computes it as the least-squares problem whose normal
    equations those are. ``route="reduced"`` uses the push-through form
    ``U = T C`` with ``T = S2^{-1} M^T S1`` and ``(M T + I) C = K``; writing
    ``pi = 1/s``, that ``m0 x m0`` system equals
    ``(M pi2 M^T + pi1) S1 C = K`` and is solved through a QR factor of
    ``[M pi2^{1/2} | pi1^{1/2}]^T``. ``route="linear_solve"`` forms ``T``
    explicitly and solves ``(M T + I) C = K`` by LU; it is kept as a
    reference and refuses ill-conditioned systems. ``"auto"`` takes the
    reduced route when ``m0 < n0``.
    """
    m0, n0 = space.m0, space.n0
    c = k_mat.shape[1]
    if n0 == 0:
        return np.zeros((0, c))
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ValueError("reweighting entries must be positive")
    s1 = s[list(space.pivot_columns)]
    s2 = s[list(space.free_columns)]
    M = space.M
    if route == "auto":
        route = "reduced" if m0 < n0 else "normal"
    if route == "normal":
        r1, r2 = np.sqrt(s1), np.sqrt(s2)
        stacked = np.vstack([r1[:, None] * M, np.diag(r2)])
        rhs = np.vstack([r1[:, None] * k_mat, np.zeros((n0, c))])
        return weighted_lstsq(stacked, rhs)
    if route == "reduced":
        q2, q1 = 1.0 / np.sqrt(s2), 1.0 / np.sqrt(s1)
        wide = np.hstack([M * q2[None, :], np.diag(q1)])
        z = min_norm_qr(wide, k_mat)
        return q2[:, None] * z[:n0]
    if route == "linear_solve":
        t = (M / s2[None, :]).T * s1[None, :]
        c_mat = solve_linear(M @ t + np.eye(m0), k_mat)
        return t @ c_mat
    raise ValueError(f"unknown route {route!r}")


def rank_features(w, d, n_features=None, excluded=None):
    """Order features by descending ``||w_i||_2``; ties go to the lower index.

    Parameters
    ----------
    w : (n, c) array
        Weight matrix in original feature order. Rows beyond ``n_features``
        (the bias row) are ignored.
    d : int
        Number of features to select.
    n_features : int, optional
        Count of real features; defaults to ``w.shape[0] - 1``.
    excluded : bool array, optional
        Features that may never be selected (zero-variance columns); they
        are moved to the end of the order.
    """
    w = np.asarray(w, dtype=float)
    if n_features is None:
        n_features = w.shape[0] - 1
    if not (1 <= d <= n_features):
        raise ValueError(f"d must lie in 1..{n_features}, got {d}")
    norms = np.linalg.norm(w[:n_features], axis=1)
    idx = np.arange(n_features)
    if excluded is None:
        excluded = np.zeros(n_features, dtype=bool)
    excluded = np.asarray(excluded, dtype=bool)
    order = np.lexsort((idx, -norms, excluded))
    top = order[:d]
    selected = top[~excluded[top]]
    return FeatureRanking(row_norms=norms, order=order, selected=selected)


def joint_step(space: SolutionSpace, s, y, u0=None, e0=None):
    """Minimize ``||Sigma W(U, E)||_F^2`` over ``U`` and ``Y * E >= 0`` together.

    With ``E = Y * Z`` every class column is a least-squares problem in
    ``(u_j, z_j)`` with ``z_j >= 0`` and ``u_j`` free; pivot rows carry
    ``sigma_i (N_j + L (y_j * z_j) - M u_j)`` and free rows ``sigma_i u_j``.
    ``u0``/``e0`` warm-start the solver, whose answer is never worse.

    Returns ``(u, e, converged)``.
    """
    y = np.asarray(y, dtype=float)
    sigma = np.sqrt(np.asarray(s, dtype=float))
    if np.any(sigma <= 0):
        raise ValueError("reweighting entries must be positive")
    m, c = y.shape
    n0 = space.n0
    s1 = sigma[list(space.pivot_columns)]
    s2 = sigma[list(space.free_columns)]
    weighted_m = s1[:, None] * space.M
    weighted_l = s1[:, None] * space.L
    lower = np.hstack([np.diag(s2), np.zeros((n0, m))])
    free = np.r_[np.ones(n0, dtype=bool), np.zeros(m, dtype=bool)]
    u = np.zeros((n0, c))
    e = np.zeros((m, c))
    converged = True
    for j in range(c):
        design = np.vstack([np.hstack([-weighted_m, weighted_l * y[:, j]]), lower])
        target = np.r_[-s1 * space.N[:, j], np.zeros(n0)]
        start = None
        if u0 is not None and e0 is not None:
            start = np.r_[u0[:, j], np.maximum(y[:, j] * e0[:, j], 0.0)]
        res = nnls(design, target, x0=start, free=free)
        converged &= res.converged
        u[:, j] = res.x[:n0]
        e[:, j] = y[:, j] * res.x[n0:]
    return u, e, converged


def _alternating_step(space, s, y, e_prev, p, floor):
    k_mat = space.N + space.L @ e_prev
    u = u_step(space, s, k_mat)
    v = k_mat - space.M @ u if space.n0 else k_mat
    candidate = space.compose(u, e_prev)
    # eps comes from the whole candidate, free rows included
    _, _, eps_v = floored_weights(candidate, p, floor)
    lam = np.maximum(row_norms(v), eps_v) ** (p / 2.0 - 1.0)
    h = space.N - space.M @ u if space.n0 else space.N.copy()
    e, ok = solve_e_step(lam, space.L, h, y, e0=e_prev)
    scratch = IterationScratch(s=s, s1=s[list(space.pivot_columns)],
                               s2=s[list(space.free_columns)],
                               g=space.scatter_pivot(k_mat), k_mat=k_mat, v=v,
                               lambda_diag=lam, h=h, candidate=candidate)
    return u, e, ok, scratch


def iterate(space: SolutionSpace, y, config: SolverConfig) -> Iterator[tuple]:
    """Yield ``(state, scratch)`` after every outer iteration.

    The same ``state`` object is updated in place; ``scratch`` is fresh each
    time. Stops on the relative-change test or the iteration budget.
    """
    y = np.asarray(y, dtype=float)
    p, floor = config.p, config.weight_floor
    m, c = y.shape
    n = space.n_rows
    state = SolverState(u=np.zeros((space.n0, c)), e=np.zeros((m, c)),
                        w=np.zeros((n, c)), sigma_diag=np.ones(n))
    prev = None
    beta = 0.5
    scale = l2p_norm(space.Q, p)
    for k in range(config.max_outer_iterations):
        s = state.sigma_diag**2
        if config.scheme == "joint":
            warm = k > 0
            u, e, ok = joint_step(space, s, y, state.u if warm else None,
                                  state.e if warm else None)
            scratch = IterationScratch(s=s, s1=s[list(space.pivot_columns)],
                                       s2=s[list(space.free_columns)])
        else:
            u, e, ok, scratch = _alternating_step(space, s, y, state.e, p, floor)
        w = space.compose(u, e)
        obj = l2p_norm(w, p)

        if config.extrapolate and k > 0:
            # W is affine in (U, E) and clipping Z keeps Y * E >= 0, so the
            # trial point is feasible; it is kept only if it is strictly better
            u_try = u + beta * (u - state.u)
            z_try = np.maximum(y * (e + beta * (e - state.e)), 0.0)
            e_try = y * z_try
            w_try = space.compose(u_try, e_try)
            obj_try = l2p_norm(w_try, p)
            if obj_try < obj:
                u, e, w, obj = u_try, e_try, w_try, obj_try
                beta = min(1.5 * beta, 10.0)
                scratch.extrapolated = True
            else:
                beta = max(0.5 * beta, 0.5)

        sigma, norms, eps_w = floored_weights(w, p, floor)
        # rows at rounding level are exact zeros
        w[norms <= eps_w] = 0.0
        obj = l2p_norm(w, p)

        state.u, state.e, state.w = u, e, w
        state.sigma_diag = sigma
        state.iteration = k + 1
        state.subproblems_converged &= ok
        state.objective_trace.append(obj)
        tol = config.relative_objective_tolerance
        if prev is not None and abs(prev - obj) <= tol * prev:
            state.converged = True
        elif obj <= config.weight_floor * scale:
            # W = 0 is optimal: its relative change never settles, so stop
            # once the objective is at rounding level for this problem
            state.converged = True
        yield state, scratch
        if state.converged:
            return
        prev = obj


def solve_space(space: SolutionSpace, y, config: SolverConfig) -> SolverState:
    """Run the reweighting loop to completion and return the final state."""
    state = None
    for state, _ in iterate(space, y, config):
        pass
    if not state.converged:
        log.warning("no convergence within %d iterations (p=%g)",
                    config.max_outer_iterations, config.p)
    return state


def prepare(dataset: Dataset):
    """Design matrix with bias, label matrix and solution space for ``dataset``."""
    dataset.check_classes()
    x = absorb_bias(dataset.features)
    y = build_label_matrix(dataset.labels, dataset.n_classes)
    return x, y, build_solution_space(x, y)


def run(dataset: Dataset, config: SolverConfig):
    """Select features from ``dataset``.

    Features are used as given; standardize beforehand if desired.

    Returns
    -------
    state : SolverState
    ranking : FeatureRanking
    """
    if config.feature_count_d > dataset.n_features:
        raise ValueError(f"cannot select {config.feature_count_d} of "
                         f"{dataset.n_features} features")
    _, y, space = prepare(dataset)
    state = solve_space(space, y, config)
    ranking = rank_features(state.w, config.feature_count_d, dataset.n_features,
                            excluded=dataset.constant_features)
    return state, ranking


class SweepError(RuntimeError):
    def __init__(self, p, cause):
        super().__init__(f"p={p:g}: {cause}")
        self.p = p
        self.cause = cause


@dataclass
class SweepResult:
    p: float
    state: SolverState
    ranking: FeatureRanking


def sweep_p(dataset: Dataset, p_grid: Sequence[float] = DEFAULT_P_GRID,
            config: Optional[SolverConfig] = None) -> List[SweepResult]:
    """One solver run per ``p`` on identical data; ``config.p`` is overridden."""
    config = config or SolverConfig()
    if len(p_grid) == 0:
        raise ValueError("p grid is empty")
    out = []
    for p in p_grid:
        try:
            cfg = replace(config, p=float(p))
            state, ranking = run(dataset, cfg)
        except (ValueError, ArithmeticError) as exc:
            raise SweepError(float(p), exc) from exc
        out.append(SweepResult(p=float(p), state=state, ranking=ranking))
    return out
