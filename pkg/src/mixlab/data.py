"""Datasets: delimited-text loading, toy generators, label noise, KNN, batching."""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "Dataset",
    "DataFormatError",
    "NeighborIndex",
    "load_csv",
    "load_manifest",
    "make_synthetic",
    "mode_means",
    "corrupt_labels",
    "build_knn",
    "minibatches",
    "one_hot",
    "stratified_split",
    "SYNTHETIC_KINDS",
]

log = logging.getLogger(__name__)

SYNTHETIC_KINDS = ("two_moons", "two_spirals", "gauss_ring", "gauss_grid", "gauss_blobs")


class DataFormatError(ValueError):
    """Malformed delimited-text input; ``line`` is 1-based."""

    def __init__(self, path, line, msg):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {msg}")


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    corrupted: np.ndarray = None
    class_names: tuple = ()

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(f"features {self.features.shape} and labels {self.labels.shape} disagree")
        if self.corrupted is None:
            self.corrupted = np.zeros(len(self.labels), dtype=bool)
        self.corrupted = np.asarray(self.corrupted, dtype=bool)
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")

    def __len__(self):
        return len(self.labels)

    @property
    def input_dim(self):
        return self.features.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx)
        return Dataset(self.features[idx], self.labels[idx], self.num_classes, self.corrupted[idx], self.class_names)

    def bounds(self):
        """Per-feature (min, max) over the examples."""
        return self.features.min(axis=0), self.features.max(axis=0)


# --------------------------------------------------------------------------
# delimited text
# --------------------------------------------------------------------------


def _zscore(x):
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    out = x.copy()
    varying = std > 0
    out[:, varying] = (x[:, varying] - mean[varying]) / std[varying]
    return out


def load_csv(path, label_column=-1, has_header=False, delimiter=","):
    """Read one example per row; returns z-scored features and integer labels.

    ``label_column`` is an index (negative counts from the end) or, with a
    header, a column name.  Class tokens get ids in order of first appearance.
    Zero-variance columns are left as they are.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh, delimiter=delimiter)) if any(c.strip() for c in r)]
    if has_header:
        if not rows:
            raise DataFormatError(path, 1, "empty file")
        header = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
        if isinstance(label_column, str):
            if label_column not in header:
                raise DataFormatError(path, 1, f"no column named {label_column!r}")
            label_column = header.index(label_column)
    elif isinstance(label_column, str):
        raise ValueError("a label column name needs has_header=True")
    if not rows:
        raise DataFormatError(path, 1, "no data rows")

    arity = len(rows[0][1])
    if arity < 2:
        raise DataFormatError(path, rows[0][0], "need at least one feature and a label")
    label_idx = label_column % arity if -arity <= label_column < arity else None
    if label_idx is None:
        raise ValueError(f"label column {label_column} out of range for {arity} columns")

    tokens, feats, ids = {}, [], []
    for lineno, row in rows:
        if len(row) != arity:
            raise DataFormatError(path, lineno, f"expected {arity} fields, found {len(row)}")
        tok = row[label_idx].strip()
        ids.append(tokens.setdefault(tok, len(tokens)))
        vals = []
        for j, cell in enumerate(row):
            if j == label_idx:
                continue
            try:
                v = float(cell)
            except ValueError:
                raise DataFormatError(path, lineno, f"cannot parse {cell!r} in column {j} as a number") from None
            if not np.isfinite(v):
                raise DataFormatError(path, lineno, f"non-finite value in column {j}")
            vals.append(v)
        feats.append(vals)

    x = _zscore(np.array(feats, dtype=np.float64))
    return Dataset(x, np.array(ids), num_classes=len(tokens), class_names=tuple(tokens))


def load_manifest(path):
    """Read a JSON mapping ``name -> {path, label_column, delimiter, has_header}``.

    Relative paths resolve against the manifest's directory.
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    entries = {}
    for name, e in doc.items():
        p = e["path"]
        entries[name] = {
            "path": p if os.path.isabs(p) else os.path.join(base, p),
            "label_column": e.get("label_column", -1),
            "delimiter": e.get("delimiter", ","),
            "has_header": bool(e.get("has_header", False)),
        }
    return entries


def stratified_split(ds, test_fraction, rng):
    """Seeded per-class split; each class contributes ``round(test_fraction * size)`` test rows."""
    train_idx, test_idx = [], []
    for c in range(ds.num_classes):
        members = np.flatnonzero(ds.labels == c)
        members = members[rng.permutation(len(members))]
        n_test = int(round(test_fraction * len(members)))
        test_idx.append(members[:n_test])
        train_idx.append(members[n_test:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return ds.subset(train_idx), ds.subset(test_idx)


# --------------------------------------------------------------------------
# synthetic data
# --------------------------------------------------------------------------


def mode_means(kind):
    """Component means of the unlabeled GAN toy mixtures."""
    if kind == "gauss_ring":
        ang = 2.0 * np.pi * np.arange(8) / 8
        return 2.0 * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    if kind == "gauss_grid":
        g = np.linspace(-2.0, 2.0, 5)
        xx, yy = np.meshgrid(g, g, indexing="ij")
        return np.stack([xx.ravel(), yy.ravel()], axis=1)
    raise ValueError(f"{kind!r} has no mode means")


def _class_sizes(n, c):
    base, extra = divmod(n, c)
    return [base + (1 if i < extra else 0) for i in range(c)]


def make_synthetic(kind, n, noise_sigma=0.1, rng=None, num_classes=10, dim=2, spread=3.0):
    """Toy datasets.

    ``two_moons`` and ``two_spirals`` are balanced 2-class sets in 2D.
    ``gauss_ring`` (8 modes on a radius-2 circle) and ``gauss_grid`` (5x5
    means over [-2, 2]^2) are unlabeled (``num_classes=1``); ``noise_sigma``
    is the component std there (0.02 in the GAN experiments).
    ``gauss_blobs`` draws ``num_classes`` isotropic clusters in ``dim``
    dimensions with means ~ N(0, spread^2) and unit-scaled ``noise_sigma``.
    """
    if kind not in SYNTHETIC_KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}; choose from {SYNTHETIC_KINDS}")
    if n < 2:
        raise ValueError("n must be at least 2")
    if rng is None:
        rng = np.random.default_rng(0)

    if kind == "two_moons":
        n0, n1 = _class_sizes(n, 2)
        t0 = rng.uniform(0.0, np.pi, n0)
        t1 = rng.uniform(0.0, np.pi, n1)
        upper = np.stack([np.cos(t0), np.sin(t0)], axis=1)
        lower = np.stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)], axis=1)
        x = np.concatenate([upper, lower]) + noise_sigma * rng.standard_normal((n, 2))
        y = np.repeat([0, 1], [n0, n1])
        return Dataset(x, y, 2)

    if kind == "two_spirals":
        n0, n1 = _class_sizes(n, 2)
        pts = []
        for cls, m in enumerate((n0, n1)):
            t = np.sqrt(rng.uniform(0.0, 1.0, m)) * 3.0 * np.pi
            arm = np.stack([t * np.cos(t), t * np.sin(t)], axis=1) / np.pi
            pts.append(arm if cls == 0 else -arm)
        x = np.concatenate(pts) + noise_sigma * rng.standard_normal((n, 2))
        y = np.repeat([0, 1], [n0, n1])
        return Dataset(x, y, 2)

    if kind in ("gauss_ring", "gauss_grid"):
        means = mode_means(kind)
        comp = rng.integers(0, len(means), size=n)
        x = means[comp] + noise_sigma * rng.standard_normal((n, 2))
        return Dataset(x, np.zeros(n, dtype=np.int64), 1)

    centers = spread * rng.standard_normal((num_classes, dim))
    sizes = _class_sizes(n, num_classes)
    y = np.repeat(np.arange(num_classes), sizes)
    x = centers[y] + noise_sigma * rng.standard_normal((n, dim))
    return Dataset(x, y, num_classes)


# --------------------------------------------------------------------------
# label noise
# --------------------------------------------------------------------------


def corrupt_labels(ds, fraction, rng):
    """Resample ``round(fraction * n)`` labels uniformly over all classes.

    The new label may coincide with the old one, so the effective noise rate
    is ``fraction * (1 - 1/C)``.  Flags mark every resampled index.
    """
    if ds.num_classes < 2:
        raise ValueError("label corruption needs at least 2 classes")
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    n = len(ds)
    m = int(round(fraction * n))
    labels = ds.labels.copy()
    flags = ds.corrupted.copy()
    if m:
        idx = rng.choice(n, size=m, replace=False)
        labels[idx] = rng.integers(0, ds.num_classes, size=m)
        flags[idx] = True
    return replace(ds, labels=labels, corrupted=flags)


# --------------------------------------------------------------------------
# nearest neighbours
# --------------------------------------------------------------------------


@dataclass
class NeighborIndex:
    k: int
    neighbors: list
    scope: str = "all_class"
    effective_k: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.neighbors)


def _sorted_neighbors(dists, candidates, k):
    # stable sort on distance keeps lower index first among ties
    order = np.argsort(dists, kind="stable")[:k]
    return candidates[order]


def build_knn(ds, k, scope="all_class"):
    """Exact Euclidean k-nearest neighbours, self excluded, ties to the lower index.

    ``scope="same_class"`` searches only the example's own class; when a class
    has ``k`` or fewer members ``k`` shrinks to ``size - 1`` for that class.
    """
    if scope not in ("all_class", "same_class"):
        raise ValueError(f"scope must be 'all_class' or 'same_class', got {scope!r}")
    n = len(ds)
    if n < 2:
        raise ValueError("need at least 2 examples to build a neighbour index")
    if k < 1:
        raise ValueError("k must be positive")
    x = ds.features
    neighbors = [None] * n
    eff = np.zeros(n, dtype=np.int64)

    if scope == "all_class":
        groups = [np.arange(n)]
    else:
        groups = [np.flatnonzero(ds.labels == c) for c in range(ds.num_classes)]

    for members in groups:
        if len(members) == 0:
            continue
        kk = min(k, len(members) - 1)
        if kk < k:
            log.warning("class group of size %d cannot supply k=%d neighbours; using k=%d", len(members), k, kk)
        xm = x[members]
        for row, i in enumerate(members):
            # direct differences, not the |a|^2+|b|^2-2ab expansion: duplicates must tie exactly
            diff = xm - x[i]
            dist = (diff * diff).sum(axis=1)
            dist[row] = np.inf
            neighbors[i] = _sorted_neighbors(dist, members, kk)
            eff[i] = kk
    return NeighborIndex(k=k, neighbors=neighbors, scope=scope, effective_k=eff)


# --------------------------------------------------------------------------
# batching and encoding
# --------------------------------------------------------------------------


def minibatches(n, batch_size, rng):
    """One shuffled epoch as a list of index arrays; the last may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = len(n) if hasattr(n, "__len__") else int(n)
    perm = rng.permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


def one_hot(labels, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes})")
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out
