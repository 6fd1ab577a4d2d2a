"""Dense matrix primitives: the row-wise l2,p norm, pseudo-inverse,
tracked Gauss-Jordan elimination and guarded linear solves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

__all__ = [
    "NumericalError",
    "SingularSystemError",
    "RrefResult",
    "ELIMINATION_TOL",
    "row_norms",
    "l2p_norm",
    "l2p_power",
    "reweighting_diag",
    "pseudo_inverse",
    "rref_tracked",
    "solve_linear",
    "lstsq_qr",
    "min_norm_qr",
    "weighted_lstsq",
]

ELIMINATION_TOL = 1e-12
# solve_linear refuses systems whose 2-norm condition number exceeds this
MAX_CONDITION = 1e15


class NumericalError(ArithmeticError):
    """A dense factorization failed to produce a finite answer."""


class SingularSystemError(NumericalError):
    """The coefficient matrix of a linear solve is singular or nearly so."""


def _as_matrix(a, name="a"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def _check_p(p):
    if not (0.0 < p <= 2.0):
        raise ValueError(f"p must lie in (0, 2], got {p!r}")


def row_norms(a):
    """Euclidean norm of every row of ``a``."""
    return np.linalg.norm(np.asarray(a, dtype=float), axis=1)


def l2p_power(a, p):
    """``sum_i ||a_i||_2 ** p``, the p-th power of :func:`l2p_norm`."""
    _check_p(p)
    norms = row_norms(a)
    nz = norms[norms > 0]
    return float(np.sum(nz**p))


def l2p_norm(a, p):
    """Row-wise mixed norm ``(sum_i ||a_i||_2 ** p) ** (1 / p)``.

    A quasi-norm for ``p < 1``. Zero rows contribute nothing, so the
    all-zero matrix has norm 0.

    Parameters
    ----------
    a : array_like, shape (rows, cols)
    p : float
        Power in ``(0, 2]``.
    """
    a = _as_matrix(a)
    total = l2p_power(a, p)
    if total == 0.0:
        return 0.0
    return float(total ** (1.0 / p))


def reweighting_diag(a, p, floor=0.0):
    """Diagonal of the matrix ``Sigma`` with ``||Sigma a||_F^2 = ||a||_{2,p}^p``.

    ``Sigma_ii = 1 / max(||a_i||, floor) ** (1 - p / 2)``. With ``floor=0``
    zero rows receive weight 0, so they drop out of both sides.
    """
    _check_p(p)
    norms = row_norms(a)
    expo = 1.0 - p / 2.0
    if floor > 0:
        return np.maximum(norms, floor) ** (-expo)
    out = np.zeros_like(norms)
    nz = norms > 0
    out[nz] = norms[nz] ** (-expo)
    return out


def pseudo_inverse(a):
    """Moore-Penrose pseudo-inverse through the SVD.

    Singular values below ``max(rows, cols) * eps * s_max`` are treated as
    zero.
    """
    a = _as_matrix(a)
    rows, cols = a.shape
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    if s.size == 0:
        return np.zeros((cols, rows))
    cutoff = max(rows, cols) * np.finfo(float).eps * s[0]
    keep = s > cutoff
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    return (vt.T * inv_s) @ u.T


@dataclass(frozen=True)
class RrefResult:
    """Reduced row echelon form together with the row operations used.

    ``transform @ input == reduced``; the first ``rank`` rows of ``reduced``
    are nonzero and carry a unit pivot in ``pivot_columns[i]``.
    """

    reduced: np.ndarray
    transform: np.ndarray
    rank: int
    pivot_columns: tuple

    @property
    def free_columns(self):
        pivots = set(self.pivot_columns)
        return tuple(j for j in range(self.reduced.shape[1]) if j not in pivots)


def rref_tracked(a, tol=ELIMINATION_TOL):
    """Gauss-Jordan elimination with partial (row) pivoting.

    Columns are never permuted. A column whose best remaining pivot is below
    ``tol * max|working matrix|`` is treated as free and its remaining
    entries are flushed to zero, which keeps rank decisions deterministic.

    Returns
    -------
    RrefResult
    """
    work = _as_matrix(a).copy()
    rows, cols = work.shape
    if rows == 0 or cols == 0:
        raise ValueError("rref_tracked needs at least one row and one column")
    transform = np.eye(rows)
    pivots = []
    r = 0
    for j in range(cols):
        if r == rows:
            break
        scale = np.max(np.abs(work))
        if scale == 0.0:
            break
        thresh = tol * scale
        i = r + int(np.argmax(np.abs(work[r:, j])))
        if abs(work[i, j]) <= thresh:
            work[r:, j] = 0.0
            continue
        if i != r:
            work[[r, i]] = work[[i, r]]
            transform[[r, i]] = transform[[i, r]]
        piv = work[r, j]
        work[r] /= piv
        transform[r] /= piv
        factors = work[:, j].copy()
        factors[r] = 0.0
        work -= np.outer(factors, work[r])
        transform -= np.outer(factors, transform[r])
        work[:, j] = 0.0
        work[r, j] = 1.0
        pivots.append(j)
        r += 1
    final_scale = np.max(np.abs(work)) if work.size else 0.0
    work[np.abs(work) <= tol * final_scale] = 0.0
    work[r:] = 0.0
    return RrefResult(reduced=work, transform=transform, rank=r,
                      pivot_columns=tuple(pivots))


def solve_linear(a, b, max_condition=MAX_CONDITION, assume_a="gen"):
    """Solve ``a @ x = b`` by LU (or Cholesky for ``assume_a="pos"``).

    Raises
    ------
    SingularSystemError
        When ``a`` is not square, or its condition number exceeds
        ``max_condition``.
    """
    a = _as_matrix(a)
    b = np.asarray(b, dtype=float)
    if a.shape[0] != a.shape[1]:
        raise SingularSystemError(f"coefficient matrix is not square: {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ValueError(f"right-hand side has {b.shape[0]} rows, expected {a.shape[0]}")
    if a.shape[0] == 0:
        return np.zeros(b.shape)
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > max_condition:
        raise SingularSystemError(f"coefficient matrix is near-singular (cond={cond:.3e})")
    try:
        x = sla.solve(a, b, assume_a=assume_a, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise NumericalError("linear solve produced non-finite values")
    return x


def _check_triangular(r, max_condition):
    d = np.abs(np.diag(r))
    if d.size and (d.min() == 0.0 or d.max() / d.min() > max_condition):
        raise SingularSystemError("triangular factor is rank deficient")
    if d.size and np.linalg.cond(r) > max_condition:
        raise SingularSystemError(f"triangular factor is near-singular "
                                  f"(cond={np.linalg.cond(r):.3e})")


def weighted_lstsq(a, b, return_residual=False):
    """Least squares for systems whose rows differ wildly in scale.

    Rows are sorted by decreasing magnitude and factored by Householder QR
    with column pivoting, which keeps lightly weighted rows accurate when
    other rows carry weights many orders of magnitude larger. Columns are
    assumed linearly independent; no rank truncation is applied, since
    legitimate pivots may span the full weight range.

    With ``return_residual=True`` the residual ``b - a x`` is returned as well,
    computed as the projection ``b - Q Q^T b``. That form never subtracts the
    large, nearly cancelling products ``a_ij x_j``, so it stays accurate
    relative to ``|b|`` even where ``|a| |x|`` is huge.
    """
    a = _as_matrix(a)
    b = np.asarray(b, dtype=float)
    rows, cols = a.shape
    if cols == 0:
        x = np.zeros((0,) + b.shape[1:])
        return (x, b.copy()) if return_residual else x
    order = np.argsort(-np.max(np.abs(a), axis=1), kind="stable")
    q, r, piv = sla.qr(a[order], mode="economic", pivoting=True, check_finite=False)
    k = min(rows, cols)
    diag = np.abs(np.diag(r))
    if k < cols or np.any(diag == 0.0):
        x = np.linalg.lstsq(a, b, rcond=None)[0]
        return (x, b - a @ x) if return_residual else x
    qtb = q.T @ b[order]
    z = sla.solve_triangular(r[:k, :k], qtb, lower=False, check_finite=False)
    x = np.empty_like(z)
    x[piv] = z
    if not return_residual:
        return x
    resid = np.empty_like(b)
    resid[order] = b[order] - q @ qtb
    return x, resid


def lstsq_qr(a, b, max_condition=MAX_CONDITION):
    """Least-squares solution of a tall, full-column-rank system via Householder QR.

    Its normal equations are ``a^T a x = a^T b``, but the factored form only
    sees ``cond(a)``, the square root of ``cond(a^T a)``.
    """
    a = _as_matrix(a)
    q, r = np.linalg.qr(a, mode="reduced")
    _check_triangular(r, max_condition)
    return sla.solve_triangular(r, q.T @ b, lower=False, check_finite=False)


def min_norm_qr(a, b, max_condition=MAX_CONDITION):
    """Minimum-norm solution of a wide, full-row-rank system ``a x = b``.

    With ``a^T = Q R`` the answer is ``Q R^{-T} b``; equivalently
    ``x = a^T z`` where ``(a a^T) z = b`` is solved through ``R^T R``.
    """
    a = _as_matrix(a)
    q, r = np.linalg.qr(a.T, mode="reduced")
    _check_triangular(r, max_condition)
    return q @ sla.solve_triangular(r, b, trans="T", lower=False, check_finite=False)
