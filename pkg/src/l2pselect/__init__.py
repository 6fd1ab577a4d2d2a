"""Row-sparse feature selection by direct l2,p-norm minimization.

The weight matrix of a one-vs-rest linear model is constrained to fit every
training sample with margin at least one, and among all such matrices the
one with the smallest ``sum_i ||w_i||_2 ** p`` is sought. Features are
ranked by the norms of their rows.
"""

__version__ = "0.1.0"

from .dataset import Dataset, Standardizer, encode_labels, normalize
from .solver import (DEFAULT_P_GRID, FeatureRanking, SolverConfig, SolverState,
                     rank_features, run, sweep_p)

__all__ = [
    "__version__",
    "Dataset",
    "Standardizer",
    "encode_labels",
    "normalize",
    "DEFAULT_P_GRID",
    "FeatureRanking",
    "SolverConfig",
    "SolverState",
    "rank_features",
    "run",
    "sweep_p",
]
