"""Colour gradients traversing the mapping space.

A one-feature gradient runs red (low) -> green -> blue (high) along a single
feature axis, so every other plot inherits the ordering of that feature. The
PCA gradient spreads two principal components over hue and brightness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset
from ..errors import ConfigError, DegenerateError

ANCHORS = np.array([
    [0.85, 0.10, 0.10],  # red
    [0.10, 0.70, 0.10],  # green
    [0.10, 0.25, 0.90],  # blue
])

# no-use / long-term / short-term in the cmc figures: black, red, green
CLASS_PALETTE = np.array([
    [0.0, 0.0, 0.0],
    [0.85, 0.10, 0.10],
    [0.10, 0.65, 0.10],
    [0.10, 0.25, 0.90],
    [0.80, 0.50, 0.00],
    [0.55, 0.20, 0.70],
    [0.00, 0.60, 0.65],
    [0.50, 0.50, 0.50],
])


@dataclass
class ColorGradient:
    source: str
    rgb: np.ndarray
    position: np.ndarray | None = None
    mapping: str = "linear"
    note: str = ""
    legend: dict = field(default_factory=dict)


def ramp(t: np.ndarray) -> np.ndarray:
    """Piecewise-linear red -> green -> blue colours for positions in [0, 1]."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    lo = np.where(t < 0.5, 0, 1)
    frac = np.where(t < 0.5, t * 2, (t - 0.5) * 2)[:, None]
    return ANCHORS[lo] * (1 - frac) + ANCHORS[lo + 1] * frac


def _positions(values: np.ndarray, mapping: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if mapping == "rank":
        if values.size < 2:
            return np.full(values.shape, 0.5)
        # average rank for ties keeps equal values on equal colours
        order = np.argsort(values, kind="stable")
        ranks = np.empty(values.size)
        ranks[order] = np.arange(values.size)
        uniq, inv = np.unique(values, return_inverse=True)
        mean_rank = np.bincount(inv, weights=ranks) / np.bincount(inv)
        return mean_rank[inv] / (values.size - 1)
    if mapping != "linear":
        raise ConfigError(f"unknown mapping {mapping!r}")
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.full(values.shape, 0.5)
    return (values - lo) / (hi - lo)


def feature_gradient(dataset: Dataset, feature: int | str, mapping: str = "linear") -> ColorGradient:
    j = dataset.schema.index(feature)
    t = _positions(dataset.X[:, j], mapping)
    col = dataset.X[:, j]
    return ColorGradient(f"feature:{dataset.names[j]}", ramp(t), t, mapping,
                         legend={"low": float(col.min()), "high": float(col.max())})


def class_gradient(dataset: Dataset) -> ColorGradient:
    if dataset.n_classes == 0:
        raise ConfigError("class colouring needs a classification dataset")
    rgb = CLASS_PALETTE[dataset.y % len(CLASS_PALETTE)]
    return ColorGradient("class", rgb, None, "class",
                         legend={lab: CLASS_PALETTE[k % len(CLASS_PALETTE)].tolist()
                                 for k, lab in enumerate(dataset.schema.classes)})


@dataclass
class PCAResult:
    components: np.ndarray
    explained_ratio: np.ndarray
    scores: np.ndarray
    columns: list[int]


def pca(matrix: np.ndarray, n_components: int = 2) -> PCAResult:
    """PCA of the z-scored columns via the correlation-matrix eigendecomposition.

    Constant columns are dropped. Each component's largest-magnitude loading
    is made positive.
    """
    X = np.asarray(matrix, dtype=float)
    sd = X.std(axis=0)
    keep = np.nonzero(sd > 0)[0]
    if keep.size == 0:
        raise DegenerateError("every column is constant")
    Z = (X[:, keep] - X[:, keep].mean(axis=0)) / sd[keep]
    cov = Z.T @ Z / Z.shape[0]
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(-vals, kind="stable")
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order]
    for c in range(vecs.shape[1]):
        i = int(np.argmax(np.abs(vecs[:, c])))
        if vecs[i, c] < 0:
            vecs[:, c] = -vecs[:, c]
    m = min(n_components, keep.size)
    ratio = vals / vals.sum()
    return PCAResult(vecs[:, :m].T, ratio[:m], Z @ vecs[:, :m], keep.tolist())


def pca_gradient(dataset: Dataset, features=None) -> ColorGradient:
    """Two principal components of the (integer-coded, z-scored) features as hue and brightness."""
    cols = list(range(dataset.n_features)) if features is None else [dataset.schema.index(f) for f in features]
    res = pca(dataset.X[:, cols], 2)
    note = ""
    n_comp = res.scores.shape[1]
    if n_comp < 2 or res.explained_ratio[1] <= 1e-12:
        note = "rank-deficient features: fell back to one principal component"
        n_comp = 1
    hue = _positions(res.scores[:, 0], "linear")
    rgb = ramp(hue)
    if n_comp == 2:
        light = _positions(res.scores[:, 1], "linear")
        rgb = rgb * (0.45 + 0.55 * light[:, None])
    return ColorGradient("pca2", rgb, hue, "linear", note,
                         legend={"explained_ratio": res.explained_ratio[:n_comp].tolist()})
