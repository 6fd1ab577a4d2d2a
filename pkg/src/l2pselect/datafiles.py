"""Reading datasets from text files, seeded train/test splits and result files.

Files number features and classes from 1, as is customary for tabular and
sparse text formats; in memory everything is 0-based. The conversion
happens here and nowhere else.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataset import Dataset, Standardizer, encode_labels, normalize

__all__ = [
    "DataFormatError",
    "SplitSpec",
    "read_dense_csv",
    "read_sparse_libsvm_format",
    "write_dense_csv",
    "split_indices",
    "split",
    "result_record",
    "write_result",
    "read_result",
    "atomic_write_text",
]


class DataFormatError(ValueError):
    """A data file could not be parsed; the message carries the location."""

    def __init__(self, path, message, line=None, column=None):
        where = str(path)
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line
        self.column = column


def _read_lines(path):
    # newline="" keeps CR in place for csv; splitlines() drops LF and CRLF alike
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return fh.read().splitlines()


def read_dense_csv(path, has_header=False, label_column=-1) -> Dataset:
    """Load a comma-separated table with one label column.

    Parameters
    ----------
    path : str or path-like
    has_header : bool
        Skip the first line and keep it as feature names.
    label_column : int
        0-based position of the label column; negative values count from the
        end (default: last column).

    Returns
    -------
    Dataset
        Labels are coded ``0..c-1`` in order of first appearance;
        ``classes`` holds the original label strings.

    Raises
    ------
    DataFormatError
        Empty file, ragged rows or unparseable cells, with line and column
        (both 1-based) in the message.
    """
    lines = _read_lines(path)
    rows = list(csv.reader(lines))
    numbered = [(i + 1, r) for i, r in enumerate(rows) if r and any(c.strip() for c in r)]
    names = None
    if has_header and numbered:
        names = [c.strip() for c in numbered[0][1]]
        numbered = numbered[1:]
    if not numbered:
        raise DataFormatError(path, "no data rows")
    width = len(numbered[0][1])
    if width < 2:
        raise DataFormatError(path, "need at least one feature and one label column",
                              line=numbered[0][0])
    if not (-width <= label_column < width):
        raise DataFormatError(path, f"label column {label_column} out of range for {width} columns")
    lab = label_column % width
    feats = np.empty((len(numbered), width - 1))
    raw = []
    for r, (lineno, cells) in enumerate(numbered):
        if len(cells) != width:
            raise DataFormatError(path, f"expected {width} cells, found {len(cells)}", line=lineno)
        k = 0
        for j, cell in enumerate(cells):
            if j == lab:
                label = cell.strip()
                if not label:
                    raise DataFormatError(path, "empty label", line=lineno, column=j + 1)
                raw.append(label)
                continue
            try:
                feats[r, k] = float(cell)
            except ValueError:
                raise DataFormatError(path, f"cannot parse {cell.strip()!r} as a number",
                                      line=lineno, column=j + 1) from None
            if not np.isfinite(feats[r, k]):
                raise DataFormatError(path, "non-finite value", line=lineno, column=j + 1)
            k += 1
    codes, classes = encode_labels(raw)
    feature_names = None
    if names is not None:
        if len(names) != width:
            raise DataFormatError(path, f"header has {len(names)} names for {width} columns", line=1)
        feature_names = tuple(n for j, n in enumerate(names) if j != lab)
    return Dataset(features=feats, labels=codes, classes=classes, feature_names=feature_names)


def read_sparse_libsvm_format(path) -> Dataset:
    """Load ``label idx:val ...`` lines (1-based, strictly ascending indices).

    Absent entries are zero and the feature count is the largest index seen.
    """
    lines = _read_lines(path)
    raw, entries = [], []
    width = 0
    for lineno, line in enumerate(lines, start=1):
        tokens = line.split()
        if not tokens:
            continue
        raw.append(tokens[0])
        row = []
        last = 0
        for pos, tok in enumerate(tokens[1:], start=2):
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise DataFormatError(path, f"malformed pair {tok!r}", line=lineno, column=pos)
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise DataFormatError(path, f"malformed pair {tok!r}", line=lineno, column=pos) from None
            if idx < 1:
                raise DataFormatError(path, f"index {idx} is not positive", line=lineno, column=pos)
            if idx <= last:
                raise DataFormatError(path, f"index {idx} does not ascend", line=lineno, column=pos)
            if not np.isfinite(val):
                raise DataFormatError(path, "non-finite value", line=lineno, column=pos)
            last = idx
            row.append((idx - 1, val))
        width = max(width, last)
        entries.append(row)
    if not raw:
        raise DataFormatError(path, "no data rows")
    feats = np.zeros((len(raw), width))
    for r, row in enumerate(entries):
        for j, val in row:
            feats[r, j] = val
    codes, classes = encode_labels(raw)
    return Dataset(features=feats, labels=codes, classes=classes)


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_dense_csv(dataset: Dataset, path, header=False):
    """Write features followed by the original label as the last column.

    Floats use the shortest representation that reads back exactly.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        names = dataset.feature_names or tuple(f"f{j + 1}" for j in range(dataset.n_features))
        writer.writerow(list(names) + ["label"])
    for row, code in zip(dataset.features, dataset.labels):
        writer.writerow([repr(float(v)) for v in row] + [dataset.classes[code]])
    atomic_write_text(path, buf.getvalue())


@dataclass(frozen=True)
class SplitSpec:
    """Seeded train/test split; ``train_fraction=0.6`` gives the 6:4 protocol."""

    train_fraction: float = 0.6
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction!r}")


def _largest_remainder(sizes, fraction):
    """Per-class train counts summing to ``round(fraction * total)``.

    Each class gets ``floor(fraction * size)``; the leftover slots go to the
    largest fractional parts, ties to the lower class code.
    """
    sizes = np.asarray(sizes)
    quota = fraction * sizes
    counts = np.floor(quota).astype(int)
    target = int(np.floor(fraction * sizes.sum() + 0.5))
    short = target - counts.sum()
    order = np.lexsort((np.arange(sizes.size), -(quota - counts)))
    counts[order[:short]] += 1
    return counts


def split_indices(labels, spec: SplitSpec):
    """Sorted train and test row indices for ``labels`` under ``spec``.

    Stratified splits draw per class with largest-remainder counts and keep
    at least one sample of every class on each side.
    """
    labels = np.asarray(labels, dtype=int)
    m = labels.size
    rng = np.random.default_rng(spec.seed)
    if not spec.stratified:
        n_train = int(np.floor(spec.train_fraction * m + 0.5))
        if not (1 <= n_train < m):
            raise ValueError(f"cannot split {m} samples at fraction {spec.train_fraction}")
        perm = rng.permutation(m)
        return np.sort(perm[:n_train]), np.sort(perm[n_train:])
    classes = np.unique(labels)
    sizes = np.array([np.count_nonzero(labels == k) for k in classes])
    if np.any(sizes < 2):
        small = classes[sizes < 2].tolist()
        raise ValueError(f"stratified split needs at least 2 samples per class; classes {small} have fewer")
    counts = np.clip(_largest_remainder(sizes, spec.train_fraction), 1, sizes - 1)
    train = []
    for k, take in zip(classes, counts):
        members = np.flatnonzero(labels == k)
        train.append(rng.permutation(members)[:take])
    train = np.sort(np.concatenate(train))
    test = np.setdiff1d(np.arange(m), train)
    return train, test


def split(dataset: Dataset, spec: SplitSpec, standardize=True):
    """Split ``dataset`` into train and test parts.

    With ``standardize`` the statistics are fitted on the training part only
    and the same transform is applied to the test part.
    """
    train_idx, test_idx = split_indices(dataset.labels, spec)
    train = dataset.subset(train_idx)
    test = dataset.subset(test_idx)
    if standardize:
        scaler = Standardizer.fit(train.features)
        train = normalize(train, scaler)
        test = normalize(test, scaler)
    return train, test


def result_record(config: dict, state, ranking, extra: Optional[dict] = None) -> dict:
    """Assemble the result record; features are numbered from 1."""
    record = {
        "config": dict(config),
        "selected": [int(j) + 1 for j in ranking.selected],
        "ranking": [{"feature": int(j) + 1, "norm": float(ranking.row_norms[j])}
                    for j in ranking.order],
        "objective_trace": [float(v) for v in state.objective_trace],
        "iterations": int(state.iteration),
        "converged": bool(state.converged),
    }
    if extra:
        record.update(extra)
    return record


def write_result(record: dict, path, fmt="json"):
    """Write a result record as JSON, or its ranking table as CSV.

    JSON floats use Python's shortest round-trip repr; CSV norms use 17
    significant digits. Both read back to identical values.
    """
    if fmt == "json":
        text = json.dumps(record, indent=2, sort_keys=False) + "\n"
    elif fmt == "csv":
        lines = ["feature,norm"]
        lines += [f"{int(r['feature'])},{float(r['norm']):.17g}" for r in record["ranking"]]
        text = "\n".join(lines) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    atomic_write_text(path, text)


def read_result(path, fmt="json"):
    """Inverse of :func:`write_result` (CSV yields the ranking list only)."""
    with open(path, "r", encoding="utf-8") as fh:
        if fmt == "json":
            return json.load(fh)
        reader = csv.DictReader(fh)
        return [{"feature": int(r["feature"]), "norm": float(r["norm"])} for r in reader]
