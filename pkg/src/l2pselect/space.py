"""Affine parameterization of every weight matrix meeting the fitting constraint.

Gauss-Jordan elimination of the design matrix ``X`` (bias column included)
splits the features into pivot and free columns. Writing ``U`` for the free
rows of ``W``, the projected system ``X W = X X^+ (Y + E)`` is solved by

    W[pivot] = N + L E - M U,    W[free] = U,

i.e. ``W = P U + Q + scatter(L E)`` with ``P[pivot] = -M``, ``P[free] = I``,
``Q[pivot] = N`` and ``Q[free] = 0``. Original column order is kept
throughout, so row ``i`` of ``W`` always belongs to feature ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import pseudo_inverse, rref_tracked


def build_label_matrix(labels, class_count):
    """One-vs-rest target matrix: +1 in the sample's class column, -1 elsewhere.

    ``labels`` are integer class codes in ``0..class_count-1``.
    """
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise ValueError("labels must be a non-empty 1-d sequence")
    if class_count < 1:
        raise ValueError(f"class_count must be positive, got {class_count}")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(np.equal(np.mod(labels, 1), 0)):
            raise ValueError("labels must be integer class codes")
        labels = labels.astype(int)
    bad = (labels < 0) | (labels >= class_count)
    if np.any(bad):
        raise ValueError(f"unknown class id {labels[bad][0]} (expected 0..{class_count - 1})")
    y = -np.ones((labels.size, class_count))
    y[np.arange(labels.size), labels] = 1.0
    return y


def absorb_bias(features):
    """Append a column of ones; the matching row of ``W`` is the bias."""
    features = np.asarray(features, dtype=float)
    return np.hstack([features, np.ones((features.shape[0], 1))])


@dataclass(frozen=True)
class SolutionSpace:
    """Parameterization ``W = P U + Q + scatter(L E)`` of the constraint set.

    Attributes
    ----------
    m0, n0 : int
        Rank of ``X`` and number of free columns (``n - m0``).
    M : (m0, n0) array
        Reduced-echelon entries of ``X`` in the free columns.
    N : (m0, c) array
        Leading rows of ``D X X^+ Y``.
    L : (m0, m) array
        Leading rows of ``D X X^+``; maps the slack ``E`` into pivot rows.
    P, Q : (n, n0) and (n, c) arrays
    pivot_columns, free_columns : tuple of int
        Original feature indices of the rows of ``M``/``N`` and of ``U``.
    """

    m0: int
    n0: int
    M: np.ndarray
    N: np.ndarray
    L: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    pivot_columns: tuple
    free_columns: tuple
    projector_applied: bool = True

    @property
    def n_rows(self):
        return self.P.shape[0]

    def scatter_pivot(self, block):
        """Embed an ``(m0, c)`` block into the pivot rows of an ``(n, c)`` zero matrix."""
        out = np.zeros((self.n_rows, block.shape[1]))
        out[list(self.pivot_columns)] = block
        return out

    def pivot_block(self, u, e):
        """Pivot rows of ``W``: ``N + L E - M U``."""
        block = self.N + self.L @ e
        if self.n0:
            block = block - self.M @ u
        return block

    def compose(self, u, e):
        """Weight matrix ``P U + Q + scatter(L E)`` in original feature order."""
        w = np.zeros((self.n_rows, self.N.shape[1]))
        w[list(self.pivot_columns)] = self.pivot_block(u, e)
        if self.n0:
            w[list(self.free_columns)] = u
        return w


def build_solution_space(x, y):
    """Eliminate ``[X : X X^+ Y]`` and read off the parameterization.

    Parameters
    ----------
    x : (m, n) array
        Design matrix, bias column already appended.
    y : (m, c) array
        One-vs-rest label matrix.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.shape[0] != x.shape[0]:
        raise ValueError(f"label matrix has {y.shape[0]} rows, design has {x.shape[0]}")
    ech = rref_tracked(x)
    if ech.rank == 0:
        raise ValueError("design matrix has rank zero")
    m0 = ech.rank
    pivots = ech.pivot_columns
    free = ech.free_columns
    n = x.shape[1]
    n0 = n - m0

    proj = x @ pseudo_inverse(x)
    lead = ech.transform[:m0] @ proj
    M = ech.reduced[:m0][:, list(free)]
    N = lead @ y

    P = np.zeros((n, n0))
    P[list(pivots)] = -M
    P[list(free), np.arange(n0)] = 1.0
    Q = np.zeros((n, y.shape[1]))
    Q[list(pivots)] = N
    return SolutionSpace(m0=m0, n0=n0, M=M, N=N, L=lead, P=P, Q=Q,
                         pivot_columns=tuple(pivots), free_columns=tuple(free),
                         projector_applied=True)
