"""Random forests with full in-bag bookkeeping.

Every node keeps its in-bag size and in-bag prediction (mean target for
regression, class-frequency vector for classification), and the model keeps
the N x n_tree matrix of bootstrap counts. That is exactly what the
decomposition into feature contributions needs.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property

import numpy as np

from . import _kernels as K
from .data import CLASSIFICATION, REGRESSION, Dataset, Schema
from .errors import ConfigError, DataError, DegenerateError, SchemaError, UnseenLevelError
from .rng import RNG_NAME, state_array, tree_seed


def n_threads(requested: int | None = None) -> int:
    if requested:
        return max(1, int(requested))
    env = os.environ.get("FF_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"FF_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


@dataclass(frozen=True)
class TrainConfig:
    """Training parameters. ``None`` fields take task-dependent defaults in :meth:`resolve`."""

    task: str = REGRESSION
    n_tree: int = 500
    mtry: int | None = None
    sample_size: int | None = None
    replace: bool = True
    stratify: tuple[int, ...] | None = None
    min_node_size: int | None = None
    seed: int = 0
    max_categorical_levels: int = 16

    def resolve(self, n_rows: int, n_features: int) -> TrainConfig:
        if self.task not in (REGRESSION, CLASSIFICATION):
            raise ConfigError(f"unknown task {self.task!r}")
        if n_features < 1:
            raise ConfigError("dataset has no features")
        mtry = self.mtry
        if mtry is None:
            mtry = max(1, n_features // 3) if self.task == REGRESSION else max(1, math.isqrt(n_features))
        min_node = self.min_node_size
        if min_node is None:
            min_node = 5 if self.task == REGRESSION else 1
        stratify = tuple(int(c) for c in self.stratify) if self.stratify is not None else None
        sample_size = self.sample_size
        if sample_size is None:
            sample_size = sum(stratify) if stratify is not None else n_rows
        cfg = replace(self, mtry=int(mtry), min_node_size=int(min_node), sample_size=int(sample_size),
                      stratify=stratify)
        if not 1 <= cfg.mtry <= n_features:
            raise ConfigError(f"mtry must lie in 1..{n_features}, got {cfg.mtry}")
        if cfg.n_tree < 1:
            raise ConfigError("n_tree must be at least 1")
        if cfg.sample_size < 1:
            raise ConfigError("sample_size must be at least 1")
        if not cfg.replace and cfg.sample_size > n_rows:
            raise ConfigError(f"sample_size {cfg.sample_size} exceeds {n_rows} rows without replacement")
        if cfg.min_node_size < 1:
            raise ConfigError("min_node_size must be at least 1")
        if stratify is not None:
            if cfg.task != CLASSIFICATION:
                raise ConfigError("stratified sampling requires a classification task")
            if sum(stratify) != cfg.sample_size:
                raise ConfigError(f"stratify counts sum to {sum(stratify)}, sample_size is {cfg.sample_size}")
            if any(c < 0 for c in stratify):
                raise ConfigError("stratify counts must be non-negative")
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stratify"] = list(self.stratify) if self.stratify is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        d = dict(d)
        if d.get("stratify") is not None:
            d["stratify"] = tuple(d["stratify"])
        return cls(**d)


@dataclass(frozen=True)
class SplitRule:
    """A binary split: numeric ``x <= threshold`` or categorical ``x in left_levels`` goes left."""

    feature: int
    threshold: float | None
    left_levels: tuple[int, ...] | None
    loss: float

    @property
    def mask(self) -> int:
        if self.left_levels is None:
            return 0
        return sum(1 << (lev - 1) for lev in self.left_levels)

    def goes_left(self, value: float) -> bool:
        if self.left_levels is not None:
            return int(value) in self.left_levels
        return value <= self.threshold


@dataclass
class Tree:
    """Flat node arrays; node 0 is the root, ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    cat_mask: np.ndarray
    left: np.ndarray
    right: np.ndarray
    count: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def parents(self) -> np.ndarray:
        parent = np.full(self.n_nodes, -1, np.int64)
        internal = np.nonzero(self.feature >= 0)[0]
        parent[self.left[internal]] = internal
        parent[self.right[internal]] = internal
        return parent


@dataclass
class ForestModel:
    schema: Schema
    config: TrainConfig
    trees: list[Tree]
    in_bag: np.ndarray
    base_rate: np.ndarray
    training_digest: str = ""
    rng: str = RNG_NAME

    @property
    def n_tree(self) -> int:
        return len(self.trees)

    @property
    def task(self) -> str:
        return self.schema.task

    @property
    def n_outputs(self) -> int:
        return self.base_rate.shape[0]

    @cached_property
    def flat(self) -> _FlatForest:
        return _FlatForest.from_trees(self.trees)

    def oob_counts(self) -> np.ndarray:
        return np.count_nonzero(self.in_bag == 0, axis=1)


@dataclass
class _FlatForest:
    offsets: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    cat_mask: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @classmethod
    def from_trees(cls, trees: list[Tree]) -> _FlatForest:
        sizes = [t.n_nodes for t in trees]
        offsets = np.zeros(len(trees) + 1, np.int64)
        offsets[1:] = np.cumsum(sizes)
        cat = lambda name, dt: np.ascontiguousarray(np.concatenate([getattr(t, name) for t in trees]), dtype=dt)
        return cls(offsets, cat("feature", np.int32), cat("threshold", np.float64), cat("cat_mask", np.int64),
                   cat("left", np.int32), cat("right", np.int32),
                   np.ascontiguousarray(np.concatenate([t.value for t in trees], axis=0)))

    def args(self):
        return self.offsets, self.feature, self.threshold, self.cat_mask, self.left, self.right


# --- operations -------------------------------------------------------------

def gini_impurity(class_counts) -> float:
    """1 minus the sum of squared class prevalences."""
    counts = np.asarray(class_counts, dtype=float)
    if np.any(counts < 0):
        raise ValueError("class counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise DegenerateError("gini impurity of an empty node is undefined")
    p = counts / total
    return float(1.0 - np.sum(p * p))


def category_partitions(n_levels: int) -> list[tuple[int, ...]]:
    """All 2^(L-1)-1 binary partitions of levels 1..L, as the level sets sent left.

    Level L always goes right, so each partition is listed once.
    """
    out = []
    for mask in range(1, 1 << (n_levels - 1)):
        out.append(tuple(lev + 1 for lev in range(n_levels - 1) if mask >> lev & 1))
    return out


def best_split(dataset: Dataset, rows=None, candidate_features=None, weights=None) -> SplitRule | None:
    """Loss-minimizing split of ``rows`` over ``candidate_features`` (tried in the given order).

    Regression minimizes the children's sum of squared residuals; classification
    minimizes the size-weighted Gini impurity. Rows are weighted by ``weights``
    (bootstrap counts; default 1). Ties keep the earlier candidate feature and,
    within a feature, the smaller break point or category mask.
    """
    n = dataset.n_rows
    rows = np.arange(n) if rows is None else np.asarray(rows, dtype=np.int64)
    feats = np.arange(dataset.n_features) if candidate_features is None else np.asarray(candidate_features, np.int64)
    w = np.ones(n, np.int64) if weights is None else np.asarray(weights, np.int64)
    rows = rows[w[rows] > 0]
    if rows.shape[0] < 2:
        return None
    y_reg, y_cls, k = _targets(dataset)
    f, thr, mask, score = K.find_split(dataset.X, y_reg, y_cls, k, dataset.is_categorical, dataset.n_levels,
                                       w, rows.copy(), 0, rows.shape[0], feats)
    if f < 0:
        return None
    sub_w = w[rows].astype(float)
    if k == 0:
        total = float(np.sum(sub_w * y_reg[rows] ** 2))
    else:
        total = float(sub_w.sum())
    if dataset.is_categorical[f]:
        levels = tuple(lev + 1 for lev in range(int(dataset.n_levels[f])) if int(mask) >> lev & 1)
        return SplitRule(int(f), None, levels, max(total - score, 0.0))
    return SplitRule(int(f), float(thr), None, max(total - score, 0.0))


def _targets(dataset: Dataset):
    if dataset.task == CLASSIFICATION:
        return np.zeros(dataset.n_rows), dataset.y.astype(np.int64), dataset.n_classes
    return dataset.y.astype(np.float64), np.zeros(dataset.n_rows, np.int64), 0


def _class_layout(dataset: Dataset):
    if dataset.task != CLASSIFICATION:
        return np.zeros(0, np.int64), np.zeros(1, np.int64)
    order = np.argsort(dataset.y, kind="stable").astype(np.int64)
    offsets = np.zeros(dataset.n_classes + 1, np.int64)
    offsets[1:] = np.cumsum(np.bincount(dataset.y, minlength=dataset.n_classes))
    return order, offsets


def bootstrap_sample(dataset: Dataset, config: TrainConfig, tree_index: int = 0) -> np.ndarray:
    """Bag counts (length N) for one tree, drawn from that tree's random stream."""
    cfg = config.resolve(dataset.n_rows, dataset.n_features)
    _check_stratify(dataset, cfg)
    state = state_array(tree_seed(cfg.seed, tree_index))
    class_rows, class_offsets = _class_layout(dataset)
    strat = np.asarray(cfg.stratify or (), dtype=np.int64)
    return K.bootstrap(state, dataset.n_rows, cfg.sample_size, cfg.replace, class_rows, class_offsets, strat)


def _check_stratify(dataset: Dataset, cfg: TrainConfig) -> None:
    if cfg.stratify is None:
        return
    if len(cfg.stratify) != dataset.n_classes:
        raise ConfigError(f"stratify needs {dataset.n_classes} class counts, got {len(cfg.stratify)}")
    avail = dataset.class_counts()
    for k, (want, have) in enumerate(zip(cfg.stratify, avail)):
        if want > 0 and have == 0:
            raise ConfigError(f"cannot draw {want} rows of class {dataset.schema.classes[k]!r}: none present")
        if not cfg.replace and want > have:
            raise ConfigError(f"class {dataset.schema.classes[k]!r}: {want} requested, {have} available")


def train_forest(dataset: Dataset, config: TrainConfig, threads: int | None = None) -> ForestModel:
    """Grow ``n_tree`` trees on bootstrap samples of ``dataset``.

    Tree ``j`` uses its own stream seeded from ``(config.seed, j)``: first the
    bootstrap draws, then the mtry feature draws at each node in growth order.
    The result does not depend on ``threads``.
    """
    if dataset.task != config.task:
        raise ConfigError(f"config task {config.task!r} does not match dataset task {dataset.task!r}")
    if dataset.n_rows == 0:
        raise DataError("cannot train on an empty dataset")
    cfg = config.resolve(dataset.n_rows, dataset.n_features)
    if dataset.task == CLASSIFICATION and np.count_nonzero(dataset.class_counts()) < 2:
        raise DataError("classification target has a single class")
    for spec, nl in zip(dataset.schema.features, dataset.n_levels):
        if spec.is_categorical and nl > cfg.max_categorical_levels:
            raise ConfigError(f"categorical feature {spec.name!r} has {nl} levels; "
                              f"max_categorical_levels is {cfg.max_categorical_levels}")
    _check_stratify(dataset, cfg)

    y_reg, y_cls, k = _targets(dataset)
    is_cat, n_levels = dataset.is_categorical, dataset.n_levels
    class_rows, class_offsets = _class_layout(dataset)
    strat = np.asarray(cfg.stratify or (), dtype=np.int64)
    X = dataset.X

    def grow(j: int):
        state = state_array(tree_seed(cfg.seed, j))
        w = K.bootstrap(state, dataset.n_rows, cfg.sample_size, cfg.replace, class_rows, class_offsets, strat)
        arrays = K.grow_tree(X, y_reg, y_cls, k, is_cat, n_levels, w, cfg.mtry, cfg.min_node_size, state)
        return w, Tree(*arrays)

    workers = min(n_threads(threads), cfg.n_tree)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(grow, range(cfg.n_tree)))
    else:
        results = [grow(j) for j in range(cfg.n_tree)]

    in_bag = np.column_stack([w for w, _ in results]).astype(np.int32)
    if k == 0:
        base = np.array([dataset.y.mean()])
    else:
        base = dataset.class_counts() / dataset.n_rows
    return ForestModel(dataset.schema, cfg, [t for _, t in results], in_bag, base, dataset.digest())


def query_matrix(model: ForestModel, rows) -> np.ndarray:
    """Validate query rows against the model schema and return the encoded matrix."""
    if isinstance(rows, Dataset):
        if rows.schema.names != model.schema.names:
            raise SchemaError("query columns do not match the model schema")
        X = rows.X
        for j, (qs, ms) in enumerate(zip(rows.schema.features, model.schema.features)):
            if qs.kind != ms.kind:
                raise SchemaError(f"column {ms.name!r} is {qs.kind} in the query but {ms.kind} in the model")
            if ms.is_categorical and qs.levels != ms.levels:
                X = X.copy() if X is rows.X else X
                labels = [qs.levels[int(v) - 1] for v in rows.X[:, j]]
                X[:, j] = _remap(labels, ms)
        return np.ascontiguousarray(X, dtype=np.float64)
    X = np.ascontiguousarray(rows, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.schema.n_features:
        raise SchemaError(f"query has {X.shape[1]} columns, model expects {model.schema.n_features}")
    for j, spec in enumerate(model.schema.features):
        if spec.is_categorical:
            col = X[:, j]
            bad = np.nonzero((col != np.round(col)) | (col < 1) | (col > len(spec.levels)))[0]
            if bad.size:
                raise SchemaError(f"row {bad[0]}: column {spec.name!r} has unknown level code {col[bad[0]]!r}")
    return X


def _remap(labels, spec):
    lookup = {lab: i + 1 for i, lab in enumerate(spec.levels)}
    out = np.empty(len(labels))
    for i, lab in enumerate(labels):
        if lab not in lookup:
            raise UnseenLevelError(i, spec.name, lab)
        out[i] = lookup[lab]
    return out


def _row_chunks(n: int, threads: int | None):
    workers = max(1, min(n_threads(threads), n))
    step = max(1, -(-n // workers))
    return [(lo, min(n, lo + step)) for lo in range(0, n, step)], workers


def _run_chunks(fn, n, threads):
    chunks, workers = _row_chunks(n, threads)
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(lambda c: fn(*c), chunks))
    else:
        for lo, hi in chunks:
            fn(lo, hi)


def _tree_sums(model: ForestModel, X: np.ndarray, mode: int, in_bag: np.ndarray, threads):
    flat = model.flat
    n = X.shape[0]
    sums = np.zeros((n, model.n_outputs))
    cnt = np.zeros(n)
    is_cat = np.array([f.is_categorical for f in model.schema.features], dtype=np.bool_)
    _run_chunks(lambda lo, hi: K.predict_sum(X, lo, hi, *flat.args(), flat.value, is_cat, in_bag, mode, sums, cnt),
                n, threads)
    return sums, cnt


def _shape_output(model: ForestModel, values: np.ndarray) -> np.ndarray:
    return values[:, 0] if model.task == REGRESSION else values


def predict(model: ForestModel, rows, threads: int | None = None) -> np.ndarray:
    """Mean of terminal-node predictions over all trees.

    Returns shape ``(n,)`` for regression and ``(n, K)`` class probabilities for
    classification.
    """
    X = query_matrix(model, rows)
    sums, cnt = _tree_sums(model, X, K.MODE_PLAIN, np.zeros((1, 1), np.int32), threads)
    return _shape_output(model, sums / model.n_tree)


def majority_vote(probabilities: np.ndarray) -> np.ndarray:
    """Class index with the highest probability; ties go to the lowest index."""
    return np.argmax(probabilities, axis=1)


@dataclass
class OOBPredictions:
    """Out-of-bag predictions over the training rows; undefined rows hold NaN."""

    values: np.ndarray
    counts: np.ndarray
    defined: np.ndarray = field(init=False)

    def __post_init__(self):
        self.defined = self.counts > 0

    @property
    def n_undefined(self) -> int:
        return int(np.count_nonzero(~self.defined))


def predict_oob(model: ForestModel, dataset: Dataset, threads: int | None = None) -> OOBPredictions:
    """Mean terminal prediction over the trees where each training row was out-of-bag."""
    X = training_matrix(model, dataset)
    sums, cnt = _tree_sums(model, X, K.MODE_OOB, model.in_bag, threads)
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = sums / cnt[:, None]
    vals[cnt == 0] = np.nan
    return OOBPredictions(_shape_output(model, vals), cnt.astype(np.int64))


def training_matrix(model: ForestModel, dataset: Dataset) -> np.ndarray:
    if dataset.n_rows != model.in_bag.shape[0]:
        raise SchemaError(f"model was trained on {model.in_bag.shape[0]} rows, dataset has {dataset.n_rows}")
    if model.training_digest and dataset.digest() != model.training_digest:
        raise SchemaError("dataset differs from the one the model was trained on; OOB quantities need the training set")
    return query_matrix(model, dataset)


def oob_error(model: ForestModel, dataset: Dataset, threads: int | None = None) -> dict:
    """OOB performance: error rate for classification, explained variance and MAE for regression."""
    oob = predict_oob(model, dataset, threads)
    d = oob.defined
    if model.task == CLASSIFICATION:
        pred = majority_vote(oob.values[d])
        return {"error_rate": float(np.mean(pred != dataset.y[d])), "n_used": int(d.sum())}
    resid = dataset.y[d] - oob.values[d]
    return {
        "explained_variance": float(1 - np.mean(resid ** 2) / np.var(dataset.y[d])),
        "mae": float(np.mean(np.abs(resid))),
        "n_used": int(d.sum()),
    }


def leaf_indices(model: ForestModel, rows) -> np.ndarray:
    """(n, n_tree) terminal node index of each row in each tree."""
    X = query_matrix(model, rows)
    flat = model.flat
    is_cat = np.array([f.is_categorical for f in model.schema.features], dtype=np.bool_)
    return K.leaf_index(X, 0, X.shape[0], *flat.args(), is_cat)
