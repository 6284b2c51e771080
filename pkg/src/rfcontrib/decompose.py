"""Local increments and feature contributions.

A row's prediction in one tree is the base rate plus the sequence of node
prediction changes along its path: first the bootstrap step from the training
base rate to the root (attributed to "feature 0"), then one step per split,
attributed to the parent's split feature. Grouping those steps by feature and
averaging over trees gives the feature contributions; restricting the average
to trees where the row was out-of-bag gives the OOB variant.

Contribution arrays are indexed ``values[row, 0]`` for the bootstrap term and
``values[row, j + 1]`` for feature ``j`` (0-based, as in the dataset).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels as K
from .data import Dataset
from .errors import DataError, VariantMismatchError
from .forest import ForestModel, OOBPredictions, _run_chunks, query_matrix, training_matrix

PLAIN = "plain"
OOB = "oob"
DEFAULT_TOLERANCE = 1e-9


@dataclass
class IncrementTrace:
    """Path of one row through one tree as ``(feature, increment)`` steps.

    ``feature`` is 0 for the bootstrap step and ``j + 1`` for a split on
    dataset column ``j``.
    """

    row: int
    tree: int
    steps: list[tuple[int, np.ndarray]]
    nodes: list[int]

    def total(self) -> np.ndarray:
        out = np.zeros_like(self.steps[0][1])
        for _, inc in self.steps:
            out = out + inc
        return out

    def by_feature(self, n_features: int) -> np.ndarray:
        out = np.zeros((n_features + 1, self.steps[0][1].shape[0]))
        for f, inc in self.steps:
            out[f] += inc
        return out


def trace_row(model: ForestModel, row, tree_index: int, row_index: int = 0) -> IncrementTrace:
    """Walk one encoded row through one tree, recording every local increment."""
    x = query_matrix(model, np.asarray(row, dtype=float))[0]
    tree = model.trees[tree_index]
    node = 0
    steps = [(0, tree.value[0] - model.base_rate)]
    nodes = [0]
    while tree.feature[node] >= 0:
        f = int(tree.feature[node])
        left = K.goes_left(x[f], model.schema.features[f].is_categorical, tree.threshold[node], tree.cat_mask[node])
        child = int(tree.left[node] if left else tree.right[node])
        steps.append((f + 1, tree.value[child] - tree.value[node]))
        nodes.append(child)
        node = child
    return IncrementTrace(row_index, tree_index, steps, nodes)


@dataclass
class ContributionMatrix:
    values: np.ndarray
    variant: str
    counts: np.ndarray
    base_rate: np.ndarray
    feature_names: list[str]
    class_labels: list[str]

    @property
    def defined(self) -> np.ndarray:
        return self.counts > 0

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1] - 1

    @property
    def n_outputs(self) -> int:
        return self.values.shape[2]

    @property
    def is_classification(self) -> bool:
        return bool(self.class_labels)

    def bootstrap_term(self) -> np.ndarray:
        return self.values[:, 0, :]

    def feature(self, j: int | str) -> np.ndarray:
        """(n, c) contributions of dataset column ``j``."""
        if isinstance(j, str):
            j = self.feature_names.index(j)
        return self.values[:, j + 1, :]

    def reconstruct(self) -> np.ndarray:
        """Base rate plus the row sums over all contribution columns."""
        return self.base_rate[None, :] + self.values.sum(axis=1)

    def variances(self) -> np.ndarray:
        """Per-feature contribution variance over defined rows, summed over classes."""
        v = self.values[self.defined, 1:, :]
        return v.var(axis=0).sum(axis=1)


def _contribution_sums(model: ForestModel, X: np.ndarray, mode: int, threads):
    flat = model.flat
    n = X.shape[0]
    d = model.schema.n_features
    out = np.zeros((n, d + 1, model.n_outputs))
    cnt = np.zeros(n)
    is_cat = np.array([f.is_categorical for f in model.schema.features], dtype=np.bool_)
    in_bag = model.in_bag if mode != K.MODE_PLAIN else np.zeros((1, 1), np.int32)
    _run_chunks(lambda lo, hi: K.contribution_sum(X, lo, hi, *flat.args(), flat.value, is_cat, model.base_rate,
                                                  in_bag, mode, out, cnt), n, threads)
    return out, cnt


def _wrap(model: ForestModel, values, counts, variant) -> ContributionMatrix:
    return ContributionMatrix(values, variant, counts.astype(np.int64), model.base_rate.copy(),
                              list(model.schema.names), list(model.schema.classes))


def feature_contributions(model: ForestModel, rows, threads: int | None = None) -> ContributionMatrix:
    """Plain contributions: increment subtotals by feature, averaged over all trees."""
    X = query_matrix(model, rows)
    out, cnt = _contribution_sums(model, X, K.MODE_PLAIN, threads)
    return _wrap(model, out / model.n_tree, cnt, PLAIN)


def oob_feature_contributions(model: ForestModel, dataset: Dataset, threads: int | None = None) -> ContributionMatrix:
    """OOB contributions of the training rows; rows never out-of-bag are NaN and flagged."""
    X = training_matrix(model, dataset)
    out, cnt = _contribution_sums(model, X, K.MODE_OOB, threads)
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = out / cnt[:, None, None]
    vals[cnt == 0] = np.nan
    return _wrap(model, vals, cnt, OOB)


def inbag_contribution_totals(model: ForestModel, dataset: Dataset, threads: int | None = None):
    """Increment subtotals weighted by each row's bag count in each tree (not normalized).

    Returns ``(totals, weights)`` with ``totals`` shaped like contribution
    values and ``weights[i] = sum_j in_bag[i, j]``. Summed over rows, every
    split-feature column is zero: at each split the size-weighted increments
    of the two children cancel.
    """
    X = training_matrix(model, dataset)
    return _contribution_sums(model, X, K.MODE_INBAG, threads)


@dataclass
class SubgroupBalance:
    feature: str
    levels: list[str]
    sizes: np.ndarray
    mean_displacement: np.ndarray
    weighted_mean: np.ndarray

    @property
    def residual(self) -> float:
        return float(np.max(np.abs(self.weighted_mean)))

    def smaller_moves_more(self) -> bool:
        norms = np.linalg.norm(self.mean_displacement, axis=1)
        order = np.argsort(self.sizes)
        return bool(np.all(np.diff(norms[order]) <= 0))


def subgroup_balance(model: ForestModel, dataset: Dataset, feature: int | str,
                     threads: int | None = None) -> SubgroupBalance:
    """Mean in-bag contribution displacement per level of a categorical feature.

    For a binary feature the two subgroups' displacements point in opposite
    directions with lengths inversely proportional to their (in-bag) sizes, so
    the size-weighted mean is zero.
    """
    j = dataset.schema.index(feature)
    spec = dataset.schema.features[j]
    if not spec.is_categorical:
        raise DataError(f"feature {spec.name!r} is not categorical")
    totals, weights = inbag_contribution_totals(model, dataset, threads)
    col = totals[:, j + 1, :]
    codes = dataset.X[:, j].astype(int)
    levels = sorted(set(codes.tolist()))
    sizes = np.array([weights[codes == lev].sum() for lev in levels])
    sums = np.array([col[codes == lev].sum(axis=0) for lev in levels])
    means = sums / np.where(sizes > 0, sizes, 1)[:, None]
    weighted = sums.sum(axis=0) / sizes.sum()
    return SubgroupBalance(spec.name, [spec.levels[lev - 1] for lev in levels], sizes, means, weighted)


@dataclass
class DecompositionReport:
    variant: str
    max_residual: float
    tolerance: float
    rows_checked: int
    rows_undefined: int

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tolerance

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.variant} decomposition: max residual {self.max_residual:.3e} "
                f"(tolerance {self.tolerance:.0e}, rows {self.rows_checked}, undefined {self.rows_undefined})")


def verify_decomposition(contributions: ContributionMatrix, predictions,
                         tolerance: float = DEFAULT_TOLERANCE) -> DecompositionReport:
    """Check base rate + row sums of contributions against the matching predictions.

    Plain contributions pair with :func:`~rfcontrib.forest.predict` output
    (an array); OOB contributions pair with :class:`OOBPredictions`.
    """
    if isinstance(predictions, OOBPredictions):
        if contributions.variant != OOB:
            raise VariantMismatchError("OOB predictions need OOB contributions")
        pred = predictions.values
        rows = predictions.defined & contributions.defined
    else:
        if contributions.variant != PLAIN:
            raise VariantMismatchError("plain predictions need plain contributions")
        pred = np.asarray(predictions)
        rows = contributions.defined
    pred = pred.reshape(contributions.n_rows, -1)
    recon = contributions.reconstruct()
    resid = np.abs(recon[rows] - pred[rows])
    max_res = float(resid.max()) if resid.size else 0.0
    if contributions.is_classification and rows.any():
        # increments are zero-sum, so each contribution cell must be too
        max_res = max(max_res, float(np.abs(contributions.values[rows].sum(axis=2)).max()))
    return DecompositionReport(contributions.variant, max_res, tolerance, int(rows.sum()), int((~rows).sum()))


# --- export -----------------------------------------------------------------

def write_contributions_csv(contributions: ContributionMatrix, path: str | Path, row_ids=None) -> None:
    """Long format: row_id, feature ('bootstrap' for column 0), class ('value' for regression), contribution."""
    row_ids = np.arange(contributions.n_rows) if row_ids is None else row_ids
    feats = ["bootstrap"] + contributions.feature_names
    classes = contributions.class_labels or ["value"]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_id", "feature", "class", "contribution"])
        for i in range(contributions.n_rows):
            if not contributions.defined[i]:
                continue
            for l, fname in enumerate(feats):
                for k, cname in enumerate(classes):
                    w.writerow([int(row_ids[i]), fname, cname, repr(float(contributions.values[i, l, k]))])


def contributions_to_dict(contributions: ContributionMatrix) -> dict:
    vals = np.where(np.isnan(contributions.values), None, contributions.values)
    return {
        "variant": contributions.variant,
        "feature_names": contributions.feature_names,
        "class_labels": contributions.class_labels,
        "base_rate": contributions.base_rate.tolist(),
        "counts": contributions.counts.tolist(),
        "values": vals.tolist(),
    }


def contributions_from_dict(d: dict) -> ContributionMatrix:
    vals = np.array(d["values"], dtype=float)
    return ContributionMatrix(vals, d["variant"], np.asarray(d["counts"], np.int64), np.asarray(d["base_rate"], float),
                              list(d["feature_names"]), list(d["class_labels"]))


def write_contributions_json(contributions: ContributionMatrix, path: str | Path) -> None:
    Path(path).write_text(json.dumps(contributions_to_dict(contributions)), encoding="utf-8")


def read_contributions_json(path: str | Path) -> ContributionMatrix:
    return contributions_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


