"""Labelled sample matrices and per-feature standardization."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class Standardizer:
    """Per-feature mean and population standard deviation.

    Columns whose training standard deviation is zero are flagged in
    ``constant`` and map to all-zero columns.
    """

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    @classmethod
    def fit(cls, features):
        features = np.asarray(features, dtype=float)
        if features.shape[0] < 2:
            raise ValueError("standardization needs at least two samples")
        mean = features.mean(axis=0)
        std = features.std(axis=0)  # ddof=0: population convention
        spread = np.max(np.abs(features - mean), axis=0)
        constant = spread <= 1e-12 * np.maximum(np.abs(mean), 1.0)
        return cls(mean=mean, std=std, constant=constant)

    def transform(self, features):
        features = np.asarray(features, dtype=float)
        safe = np.where(self.constant, 1.0, self.std)
        out = (features - self.mean) / safe
        out[:, self.constant] = 0.0
        return out


@dataclass(frozen=True)
class Dataset:
    """Samples (rows of ``features``) with integer class codes ``0..c-1``.

    ``classes[k]`` is the original label that code ``k`` stands for.
    ``standardizer`` is set once :func:`normalize` has been applied.
    """

    features: np.ndarray
    labels: np.ndarray
    classes: tuple = ()
    standardizer: Optional[Standardizer] = None
    feature_names: Optional[tuple] = field(default=None, compare=False)

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels, dtype=int)
        if features.ndim != 2:
            raise ValueError(f"features must be 2-d, got shape {features.shape}")
        if labels.shape != (features.shape[0],):
            raise ValueError(
                f"{labels.size} labels for {features.shape[0]} samples")
        if not np.all(np.isfinite(features)):
            raise ValueError("features contain non-finite values")
        classes = tuple(self.classes)
        if not classes:
            classes = tuple(range(int(labels.max()) + 1)) if labels.size else ()
        if labels.size and (labels.min() < 0 or labels.max() >= len(classes)):
            raise ValueError("label codes must lie in 0..c-1")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "classes", classes)

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def n_classes(self):
        return len(self.classes)

    @property
    def constant_features(self):
        """Boolean mask of zero-variance columns (all False if not normalized)."""
        if self.standardizer is None:
            return np.zeros(self.n_features, dtype=bool)
        return self.standardizer.constant

    def subset(self, index):
        """Rows ``index`` as a new dataset sharing classes and standardizer."""
        index = np.asarray(index, dtype=int)
        return replace(self, features=self.features[index], labels=self.labels[index])

    def check_classes(self):
        """Raise unless every class occurs at least once and c >= 2."""
        if self.n_classes < 2:
            raise ValueError(f"need at least two classes, got {self.n_classes}")
        counts = np.bincount(self.labels, minlength=self.n_classes)
        missing = [self.classes[k] for k in np.flatnonzero(counts == 0)]
        if missing:
            raise ValueError(f"classes without samples: {missing}")


def normalize(dataset: Dataset, standardizer: Optional[Standardizer] = None) -> Dataset:
    """Standardize every feature to zero mean and unit population std.

    Statistics are fitted on ``dataset`` unless ``standardizer`` is given, in
    which case those (training) parameters are applied instead.
    """
    if standardizer is None:
        standardizer = Standardizer.fit(dataset.features)
    return replace(dataset, features=standardizer.transform(dataset.features),
                   standardizer=standardizer)


def encode_labels(raw: Sequence):
    """Map raw labels to codes ``0..c-1`` in order of first appearance."""
    classes = []
    lookup = {}
    codes = np.empty(len(raw), dtype=int)
    for i, lab in enumerate(raw):
        if lab not in lookup:
            lookup[lab] = len(classes)
            classes.append(lab)
        codes[i] = lookup[lab]
    return codes, tuple(classes)
