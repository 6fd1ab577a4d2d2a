"""Nonnegative least squares and the sign-constrained slack update."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import weighted_lstsq

__all__ = ["NnlsResult", "NnlsBudgetWarning", "nnls", "solve_e_step", "e_step_objective"]


class NnlsBudgetWarning(RuntimeWarning):
    """The active-set iteration ran out of budget before meeting KKT."""


@dataclass(frozen=True)
class NnlsResult:
    x: np.ndarray
    converged: bool
    iterations: int

    def __iter__(self):
        # allows ``x, converged, iterations = nnls(...)``
        return iter((self.x, self.converged, self.iterations))


def _lstsq(a, b):
    return weighted_lstsq(a, b, return_residual=True)


def _descend(As, b, x, passive, free):
    """Lawson-Hanson inner loop: move from feasible ``x`` toward the
    unconstrained minimizer on ``passive``, dropping constrained variables
    that hit zero. ``free`` variables are always passive.

    Returns the new ``x``, passive mask and residual (projected form).
    """
    n = As.shape[1]
    while passive.any():
        idx = np.flatnonzero(passive)
        s = np.zeros(n)
        s[idx], resid = _lstsq(As[:, idx], b)
        bad = (s[idx] <= 0) & ~free[idx]
        if not bad.any():
            return s, passive, resid
        neg = idx[bad]
        ratios = x[neg] / (x[neg] - s[neg])
        k = np.argmin(ratios)
        x = x + ratios[k] * (s - x)
        leaving = passive & (x <= 0) & ~free
        leaving[neg[k]] = True
        x[leaving] = 0.0
        passive = passive & ~leaving
    return np.zeros(n), passive, b.copy()


def nnls(A, b, max_iterations=None, tolerance=1e-13, x0=None, free=None):
    """Solve ``min ||A x - b||_2`` subject to ``x >= 0`` (Lawson-Hanson).

    Columns are scaled to unit norm internally and the dual test
    ``A_j^T (b - A x) <= tolerance * ||b - A x||`` is applied in those units,
    with residuals formed by orthogonal projection so the gradient stays
    accurate on badly row-scaled systems. Every accepted step strictly
    lowers the residual; a variable whose entry fails to do so (a rounding
    artefact) is set aside until the next accepted step, so the iteration
    always terminates. The returned ``x`` is exactly nonnegative.

    Parameters
    ----------
    A : (rows, vars) array
    b : (rows,) array
    max_iterations : int, optional
        Budget of outer (variable-adding) steps; defaults to ``10 * vars``.
    tolerance : float
        Relative KKT tolerance.
    x0 : (vars,) array, optional
        Feasible starting point. The result is never worse than ``x0``.
    free : (vars,) bool array, optional
        Variables exempt from the sign constraint.

    Returns
    -------
    NnlsResult
        When the budget is exhausted the last feasible iterate is returned
        with ``converged=False`` and a :class:`NnlsBudgetWarning` is issued.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or b.ndim != 1:
        raise ValueError("expected a matrix and a vector")
    rows, n = A.shape
    if b.shape[0] != rows:
        raise ValueError(f"target has length {b.shape[0]}, design has {rows} rows")
    if max_iterations is None:
        max_iterations = 10 * max(n, 1)

    free = np.zeros(n, dtype=bool) if free is None else np.asarray(free, dtype=bool)
    if free.shape != (n,):
        raise ValueError("free must have one entry per column")
    colnorm = np.linalg.norm(A, axis=0)
    usable = colnorm > 0
    free = free & usable
    scale = np.where(usable, colnorm, 1.0)
    As = A / scale
    x = np.zeros(n)
    if n == 0 or not np.any(b) or not usable.any():
        return NnlsResult(x=x, converged=True, iterations=0)

    # starting point: least squares over the free variables alone
    x, passive, resid = _descend(As, b, x, free.copy(), free)
    best = float(resid @ resid)
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (n,) or np.any(x0[~free] < 0):
            raise ValueError("x0 must have one entry per column, nonnegative "
                             "outside the free set")
        start = np.where(usable, x0 * scale, 0.0)
        start_resid = b - As @ start
        start_value = float(start_resid @ start_resid)
        if start_value < best:
            x_try, p_try, r_try = _descend(As, b, start.copy(), (start > 0) | free, free)
            if float(r_try @ r_try) <= start_value:
                x, passive, resid = x_try, p_try, r_try
            else:
                x, passive, resid = start, (start > 0) | free, start_resid
            best = float(resid @ resid)

    blocked = ~usable
    iterations = 0
    converged = False
    while True:
        grad = As.T @ resid
        candidates = ~passive & ~blocked & (grad > tolerance * np.sqrt(best))
        if not candidates.any():
            converged = True
            break
        if iterations >= max_iterations:
            break
        iterations += 1
        t = np.flatnonzero(candidates)[np.argmax(grad[candidates])]
        entering = passive.copy()
        entering[t] = True
        x_new, p_new, r_new = _descend(As, b, x.copy(), entering, free)
        value = float(r_new @ r_new)
        if value < best:
            # genuine progress: every parked variable gets another chance
            x, passive, resid, best = x_new, p_new, r_new, value
            blocked = ~usable
        else:
            # rounding produced no descent along t; park it
            blocked[t] = True

    if not converged:
        warnings.warn(f"NNLS stopped after {iterations} iterations without meeting KKT",
                      NnlsBudgetWarning, stacklevel=2)
    x = np.where(free, x, np.maximum(x, 0.0))
    x[~passive] = 0.0
    return NnlsResult(x=x / scale, converged=converged, iterations=iterations)


def e_step_objective(lambda_diag, l, h, e):
    """``||diag(lambda) (L E + H)||_F^2``."""
    r = np.asarray(lambda_diag)[:, None] * (l @ e + h)
    return float(np.sum(r * r))


def solve_e_step(lambda_diag, l, h, y, max_iterations=None, tolerance=1e-13, e0=None):
    """Minimize ``||diag(lambda) (L E + H)||_F^2`` subject to ``Y * E >= 0``.

    With ``E = Y * Z`` the constraint becomes ``Z >= 0`` (entries of ``Y``
    are +-1), and the Frobenius objective separates over the columns of
    ``E``, each one a nonnegative least-squares problem. A feasible ``e0``
    (typically the previous slack) warm-starts every column, and the result
    is never worse than it.

    Returns
    -------
    e : (m, c) array
        Satisfies ``Y * E >= 0`` exactly.
    converged : bool
        False when any column exhausted its NNLS budget.
    """
    lambda_diag = np.asarray(lambda_diag, dtype=float)
    l = np.asarray(l, dtype=float)
    h = np.asarray(h, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(lambda_diag < 0):
        raise ValueError("lambda weights must be nonnegative")
    m0, m = l.shape
    if h.shape[0] != m0 or y.shape[0] != m or h.shape[1] != y.shape[1]:
        raise ValueError("inconsistent E-step dimensions")
    keep = lambda_diag > 0
    weighted_l = lambda_diag[keep, None] * l[keep]
    e = np.zeros(y.shape)
    converged = True
    for j in range(y.shape[1]):
        design = weighted_l * y[:, j]
        target = -lambda_diag[keep] * h[keep, j]
        start = None if e0 is None else np.maximum(y[:, j] * e0[:, j], 0.0)
        res = nnls(design, target, max_iterations=max_iterations,
                   tolerance=tolerance, x0=start)
        converged &= res.converged
        e[:, j] = y[:, j] * res.x
    return e, converged
