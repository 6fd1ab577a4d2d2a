"""Desk-scale evaluation: planted data, a ridge classifier, cross-validation
over ``p`` and support-recovery metrics."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla

from .datafiles import SplitSpec, split
from .dataset import Dataset
from .solver import DEFAULT_P_GRID, FeatureRanking, SolverConfig, run
from .space import build_label_matrix

__all__ = [
    "PlantedSpec",
    "generate_planted",
    "RidgeModel",
    "simple_classifier_fit",
    "accuracy",
    "stratified_folds",
    "CrossValidation",
    "cross_validate_p",
    "recovery_metrics",
    "TrialResult",
    "evaluate",
    "summarize_trials",
]


@dataclass(frozen=True)
class PlantedSpec:
    """Synthetic classification problem with a known informative feature set.

    ``informative`` holds 0-based feature indices.
    """

    samples: int
    features: int
    classes: int = 2
    informative: Tuple[int, ...] = (0, 1, 2, 3, 4)
    class_separation: float = 3.0
    noise_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "informative", tuple(int(j) for j in self.informative))
        if self.samples < self.classes or self.classes < 2:
            raise ValueError("need at least two classes and one sample per class")
        if not self.informative:
            raise ValueError("at least one informative feature is required")
        if len(set(self.informative)) != len(self.informative):
            raise ValueError("informative indices must be distinct")
        if len(self.informative) > self.features:
            raise ValueError("more informative features than features")
        if min(self.informative) < 0 or max(self.informative) >= self.features:
            raise ValueError("informative index out of range")
        if not self.class_separation > 0:
            raise ValueError("class_separation must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")


def class_means(spec: PlantedSpec):
    """``(c, n)`` matrix of class means.

    On the ``f``-th informative feature the class ``f mod c`` sits at
    ``+separation/2`` and every other class at ``-separation/2``; all other
    features have mean 0. For two classes each informative column therefore
    separates the classes by exactly ``class_separation``.
    """
    means = np.zeros((spec.classes, spec.features))
    half = spec.class_separation / 2.0
    for f, j in enumerate(spec.informative):
        means[:, j] = -half
        means[f % spec.classes, j] = half
    return means


def generate_planted(spec: PlantedSpec):
    """Draw a planted dataset.

    Labels cycle through the classes (balanced up to one sample) and are
    shuffled; features are the class mean plus i.i.d. Gaussian noise.

    Returns
    -------
    dataset : Dataset
    truth : frozenset of int
        The informative feature indices.
    """
    rng = np.random.default_rng(spec.seed)
    labels = rng.permutation(np.arange(spec.samples) % spec.classes)
    features = class_means(spec)[labels]
    if spec.noise_std > 0:
        features = features + spec.noise_std * rng.standard_normal(features.shape)
    names = tuple(f"f{j + 1}" for j in range(spec.features))
    ds = Dataset(features=features, labels=labels, classes=tuple(range(1, spec.classes + 1)),
                 feature_names=names)
    return ds, frozenset(spec.informative)


@dataclass(frozen=True)
class RidgeModel:
    selected: np.ndarray
    weights: np.ndarray  # (len(selected) + 1, c), bias last
    n_classes: int

    def scores(self, features):
        x = np.asarray(features, dtype=float)[:, self.selected]
        return np.hstack([x, np.ones((x.shape[0], 1))]) @ self.weights

    def predict(self, features):
        """Class of the maximal score; ties go to the lowest class code."""
        return np.argmax(self.scores(features), axis=1)


def simple_classifier_fit(train: Dataset, selected, ridge=1e-2) -> RidgeModel:
    """One-vs-rest ridge regression on the selected columns plus a bias.

    The bias is penalized too, so as ``ridge`` grows every score tends to
    zero; ``ridge=inf`` gives the all-zero model.
    """
    selected = np.asarray(sorted(int(j) for j in selected), dtype=int)
    if selected.size == 0:
        raise ValueError("no features selected")
    if not ridge > 0:
        raise ValueError("ridge must be positive")
    c = train.n_classes
    if np.isinf(ridge):
        return RidgeModel(selected, np.zeros((selected.size + 1, c)), c)
    a = np.hstack([train.features[:, selected], np.ones((train.n_samples, 1))])
    y = build_label_matrix(train.labels, c)
    gram = a.T @ a + ridge * np.eye(a.shape[1])
    weights = sla.solve(gram, a.T @ y, assume_a="pos")
    return RidgeModel(selected, weights, c)


def accuracy(model: RidgeModel, data: Dataset):
    return float(np.mean(model.predict(data.features) == data.labels))


def stratified_folds(labels, folds, seed=0):
    """Fold id per sample: each class is shuffled and dealt round-robin."""
    labels = np.asarray(labels, dtype=int)
    if folds < 2:
        raise ValueError("need at least two folds")
    counts = np.bincount(labels)
    present = np.flatnonzero(counts)
    if np.any(counts[present] < folds):
        raise ValueError(f"every class needs at least {folds} samples for {folds}-fold "
                         f"stratification; smallest has {counts[present].min()}")
    rng = np.random.default_rng(seed)
    out = np.empty(labels.size, dtype=int)
    for k in present:
        members = rng.permutation(np.flatnonzero(labels == k))
        out[members] = np.arange(members.size) % folds
    return out


@dataclass(frozen=True)
class CrossValidation:
    best_p: float
    mean_accuracy: Dict[float, float]


def cross_validate_p(train: Dataset, p_grid: Sequence[float] = DEFAULT_P_GRID, folds=3,
                     config: Optional[SolverConfig] = None, seed=0, ridge=1e-2):
    """Choose ``p`` by stratified k-fold accuracy of the downstream classifier.

    Only ``train`` is touched. Ties go to the larger ``p``.
    """
    config = config or SolverConfig()
    if len(p_grid) == 0:
        raise ValueError("p grid is empty")
    fold_of = stratified_folds(train.labels, folds, seed)
    scores = {}
    for p in p_grid:
        cfg = replace(config, p=float(p))
        accs = []
        for f in range(folds):
            fit_part = train.subset(np.flatnonzero(fold_of != f))
            val_part = train.subset(np.flatnonzero(fold_of == f))
            _, ranking = run(fit_part, cfg)
            model = simple_classifier_fit(fit_part, ranking.selected, ridge)
            accs.append(accuracy(model, val_part))
        scores[float(p)] = float(np.mean(accs))
    best = max(scores, key=lambda p: (scores[p], p))
    return CrossValidation(best_p=best, mean_accuracy=scores)


def recovery_metrics(ranking: FeatureRanking, truth: Iterable[int], d):
    """Precision of the top ``d`` against ``truth`` and the support size.

    Support size counts rows with norm above ``1e-6`` times the largest.
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    top = set(int(j) for j in ranking.order[:d])
    precision = len(top & set(int(j) for j in truth)) / d
    return precision, ranking.support_size(1e-6)


@dataclass(frozen=True)
class TrialResult:
    seed: int
    p: float
    accuracy: float
    support_size: int
    selected: Tuple[int, ...]
    converged: bool
    precision_at_d: Optional[float] = None


def evaluate(dataset: Dataset, d, p="cv", trials=1, seed=0, folds=3, truth=None,
             config: Optional[SolverConfig] = None, p_grid=DEFAULT_P_GRID,
             train_fraction=0.6, ridge=1e-2) -> List[TrialResult]:
    """Split, optionally cross-validate ``p``, select on train, score on test.

    Trial ``t`` uses split seed ``seed + t``.
    """
    config = config or SolverConfig()
    config = replace(config, feature_count_d=int(d))
    out = []
    for t in range(trials):
        train, test = split(dataset, SplitSpec(train_fraction, seed + t, stratified=True))
        if p == "cv":
            chosen = cross_validate_p(train, p_grid, folds, config, seed=seed + t, ridge=ridge).best_p
        else:
            chosen = float(p)
        state, ranking = run(train, replace(config, p=chosen))
        model = simple_classifier_fit(train, ranking.selected, ridge)
        precision = None
        if truth is not None:
            precision, _ = recovery_metrics(ranking, truth, d)
        out.append(TrialResult(seed=seed + t, p=chosen, accuracy=accuracy(model, test),
                               support_size=ranking.support_size(1e-6),
                               selected=tuple(int(j) for j in ranking.selected),
                               converged=bool(state.converged), precision_at_d=precision))
    return out


def summarize_trials(results: Sequence[TrialResult]):
    """Mean and population standard deviation of the per-trial metrics."""
    def stats(values):
        v = np.asarray(values, dtype=float)
        return {"mean": float(v.mean()), "std": float(v.std())}

    summary = {
        "trials": len(results),
        "accuracy": stats([r.accuracy for r in results]),
        "support_size": stats([r.support_size for r in results]),
        "p": [r.p for r in results],
        "converged": all(r.converged for r in results),
    }
    if results and results[0].precision_at_d is not None:
        summary["precision_at_d"] = stats([r.precision_at_d for r in results])
    return summary
