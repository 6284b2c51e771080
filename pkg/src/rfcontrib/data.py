"""Datasets, CSV ingestion and toy-data simulation.

Features are stored as one float64 matrix. Categorical columns hold integer
codes ``1..K'`` and keep their label map in the :class:`Schema`; class
targets are coded ``0..K-1``.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError, DegenerateError, SchemaError, UnseenLevelError

NUMERIC = "numeric"
CATEGORICAL = "categorical"
REGRESSION = "regression"
CLASSIFICATION = "classification"

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "?"})


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str = NUMERIC
    levels: tuple[str, ...] = ()

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL


@dataclass(frozen=True)
class Schema:
    features: tuple[FeatureSpec, ...]
    target: str
    task: str
    classes: tuple[str, ...] = ()

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def n_outputs(self) -> int:
        return len(self.classes) if self.task == CLASSIFICATION else 1

    def index(self, feature: int | str) -> int:
        """0-based column index of a feature given by name or index."""
        if isinstance(feature, (int, np.integer)):
            if not 0 <= feature < self.n_features:
                raise SchemaError(f"feature index {feature} out of range 0..{self.n_features - 1}")
            return int(feature)
        try:
            return self.names.index(feature)
        except ValueError:
            raise SchemaError(f"unknown feature {feature!r}; known: {', '.join(self.names)}") from None

    def to_dict(self) -> dict:
        return {
            "features": [{"name": f.name, "kind": f.kind, "levels": list(f.levels)} for f in self.features],
            "target": self.target,
            "task": self.task,
            "classes": list(self.classes),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> Schema:
        feats = tuple(FeatureSpec(f["name"], f["kind"], tuple(f["levels"])) for f in d["features"])
        return cls(feats, d["target"], d["task"], tuple(d["classes"]))

    def encode(self, columns: Mapping[str, Sequence]) -> np.ndarray:
        """Encode raw feature values (labels for categorical columns) into a model matrix."""
        missing = [n for n in self.names if n not in columns]
        if missing:
            raise SchemaError(f"query is missing feature columns: {', '.join(missing)}")
        n = len(columns[self.names[0]])
        X = np.empty((n, self.n_features))
        for j, spec in enumerate(self.features):
            raw = list(columns[spec.name])
            if len(raw) != n:
                raise SchemaError(f"column {spec.name!r} has {len(raw)} values, expected {n}")
            if spec.is_categorical:
                lookup = {lab: i + 1 for i, lab in enumerate(spec.levels)}
                for i, v in enumerate(raw):
                    key = _label(v)
                    if key not in lookup:
                        raise UnseenLevelError(i, spec.name, key)
                    X[i, j] = lookup[key]
            else:
                X[:, j] = np.asarray(raw, dtype=float)
        return X


def _label(v) -> str:
    if isinstance(v, (float, np.floating)) and float(v).is_integer():
        return str(int(v))
    return str(v).strip()


@dataclass
class Dataset:
    """Feature matrix plus target, validated against its schema."""

    schema: Schema
    X: np.ndarray
    y: np.ndarray
    row_ids: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        if self.X.ndim != 2 or self.X.shape[1] != self.schema.n_features:
            raise DataError(f"X must be (n, {self.schema.n_features}), got {self.X.shape}")
        n = self.X.shape[0]
        if self.schema.task == CLASSIFICATION:
            self.y = np.asarray(self.y, dtype=np.int64)
            k = len(self.schema.classes)
            if n and (self.y.min() < 0 or self.y.max() >= k):
                raise DataError(f"class codes must lie in 0..{k - 1}")
        elif self.schema.task == REGRESSION:
            self.y = np.asarray(self.y, dtype=np.float64)
        else:
            raise ConfigError(f"unknown task {self.schema.task!r}")
        if self.y.shape != (n,):
            raise DataError(f"target has {self.y.shape[0]} entries, features have {n} rows")
        if not np.all(np.isfinite(self.X)) or (self.schema.task == REGRESSION and not np.all(np.isfinite(self.y))):
            raise DataError("missing or non-finite values are not supported")
        for j, spec in enumerate(self.schema.features):
            if spec.is_categorical and n:
                col = self.X[:, j]
                if np.any(col != np.round(col)) or col.min() < 1 or col.max() > len(spec.levels):
                    raise DataError(f"categorical column {spec.name!r} must hold codes 1..{len(spec.levels)}")
        if self.row_ids is None:
            self.row_ids = np.arange(n)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def names(self) -> list[str]:
        return self.schema.names

    @property
    def task(self) -> str:
        return self.schema.task

    @property
    def n_classes(self) -> int:
        return len(self.schema.classes)

    @property
    def is_categorical(self) -> np.ndarray:
        return np.array([f.is_categorical for f in self.schema.features], dtype=np.bool_)

    @property
    def n_levels(self) -> np.ndarray:
        return np.array([len(f.levels) for f in self.schema.features], dtype=np.int64)

    def column(self, feature: int | str) -> np.ndarray:
        return self.X[:, self.schema.index(feature)]

    def digest(self) -> str:
        """Content hash of features and target, used to tie a model to its training set."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X).tobytes())
        h.update(np.ascontiguousarray(self.y).tobytes())
        return h.hexdigest()

    def with_X(self, X: np.ndarray) -> Dataset:
        return Dataset(self.schema, X, self.y, self.row_ids)

    def to_columns(self) -> dict[str, list]:
        """Raw-label view of the features (inverse of :meth:`Schema.encode`)."""
        out: dict[str, list] = {}
        for j, spec in enumerate(self.schema.features):
            col = self.X[:, j]
            if spec.is_categorical:
                out[spec.name] = [spec.levels[int(v) - 1] for v in col]
            else:
                out[spec.name] = col.tolist()
        return out

    def target_labels(self) -> list:
        if self.task == CLASSIFICATION:
            return [self.schema.classes[int(c)] for c in self.y]
        return self.y.tolist()

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.n_classes)


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _class_order(labels: Iterable[str]) -> tuple[str, ...]:
    uniq = set(labels)
    if all(_is_number(u) for u in uniq):
        return tuple(sorted(uniq, key=float))
    return tuple(sorted(uniq))


def from_columns(
    columns: Mapping[str, Sequence],
    target: str,
    task: str | None = None,
    categorical: Iterable[str] = (),
    schema: Schema | None = None,
) -> Dataset:
    """Build a dataset from raw column values (strings or numbers).

    Without a ``schema`` the column kinds are inferred: numeric unless a value
    fails to parse or the column is listed in ``categorical``. Categorical
    levels follow first appearance; class labels are sorted (numerically when
    every label is a number).
    """
    if target not in columns:
        raise DataError(f"target column {target!r} not found")
    raw_y = [str(v).strip() for v in columns[target]]
    n = len(raw_y)
    if n == 0:
        raise DataError("dataset has no rows")
    if schema is not None:
        X = schema.encode(columns)
        if schema.task == CLASSIFICATION:
            lookup = {c: i for i, c in enumerate(schema.classes)}
            y = []
            for i, v in enumerate(raw_y):
                if v not in lookup:
                    raise UnseenLevelError(i, target, v)
                y.append(lookup[v])
        else:
            y = [float(v) for v in raw_y]
        return Dataset(schema, X, np.asarray(y))

    cat_hint = set(categorical)
    unknown = cat_hint - set(columns)
    if unknown:
        raise DataError(f"categorical hint names unknown columns: {', '.join(sorted(unknown))}")
    specs = []
    mat = []
    for name, vals in columns.items():
        if name == target:
            continue
        sv = [str(v).strip() for v in vals]
        if len(sv) != n:
            raise DataError(f"column {name!r} has {len(sv)} values, expected {n}")
        if name not in cat_hint and all(_is_number(v) for v in sv):
            specs.append(FeatureSpec(name, NUMERIC))
            mat.append(np.asarray(sv, dtype=float))
        else:
            levels: dict[str, int] = {}
            codes = np.empty(n)
            for i, v in enumerate(sv):
                codes[i] = levels.setdefault(v, len(levels) + 1)
            specs.append(FeatureSpec(name, CATEGORICAL, tuple(levels)))
            mat.append(codes)
    if task is None:
        task = REGRESSION if all(_is_number(v) for v in raw_y) else CLASSIFICATION
    if task == CLASSIFICATION:
        classes = _class_order(raw_y)
        lookup = {c: i for i, c in enumerate(classes)}
        y = np.array([lookup[v] for v in raw_y], dtype=np.int64)
    elif task == REGRESSION:
        classes = ()
        try:
            y = np.asarray(raw_y, dtype=float)
        except ValueError:
            raise DataError(f"regression target {target!r} has non-numeric values") from None
    else:
        raise ConfigError(f"unknown task {task!r}")
    X = np.column_stack(mat) if mat else np.empty((n, 0))
    return Dataset(Schema(tuple(specs), target, task, classes), X, y)


def load_csv(
    path: str | Path,
    target: str,
    task: str | None = None,
    categorical: Iterable[str] = (),
    delimiter: str = ",",
    names: Sequence[str] | None = None,
    schema: Schema | None = None,
) -> Dataset:
    """Read a UTF-8 CSV into a :class:`Dataset`.

    ``names`` supplies column names for header-less files. Missing values,
    ragged rows and empty files raise :class:`DataError` with the offending
    line number.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        rows = []
        header = list(names) if names is not None else None
        for line_no, rec in enumerate(reader, start=1):
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue
            rec = [c.strip().strip('"') for c in rec]
            if header is None:
                header = rec
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}:{line_no}: expected {len(header)} fields, found {len(rec)}")
            for name, v in zip(header, rec):
                if v.lower() in MISSING_TOKENS:
                    raise DataError(f"{path}:{line_no}: missing value in column {name!r}")
            rows.append(rec)
    if header is None or not rows:
        raise DataError(f"{path}: no data rows")
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    columns = {name: [r[j] for r in rows] for j, name in enumerate(header)}
    return from_columns(columns, target, task=task, categorical=categorical, schema=schema)


def write_csv(dataset: Dataset, path: str | Path, extra: Mapping[str, Sequence] | None = None) -> None:
    cols = dataset.to_columns()
    cols[dataset.schema.target] = dataset.target_labels()
    for k, v in (extra or {}).items():
        cols[k] = list(v)
    names = list(cols)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(dataset.n_rows):
            w.writerow([_fmt(cols[n][i]) for n in names])


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


# UCI files: white wine quality is ';'-delimited with a header, cmc has no header.
CMC_COLUMNS = (
    "wife_age", "wife_education", "husband_education", "n_children", "wife_religion",
    "wife_working", "husband_occupation", "standard_of_living", "media_exposure", "contraceptive_method",
)
CMC_BINARY = ("wife_religion", "wife_working", "media_exposure")


def load_cmc(path: str | Path) -> Dataset:
    return load_csv(path, target="contraceptive_method", task=CLASSIFICATION,
                    categorical=CMC_BINARY, names=CMC_COLUMNS)


def load_wwq(path: str | Path) -> Dataset:
    return load_csv(path, target="quality", task=REGRESSION, delimiter=";")


# --- simulation -------------------------------------------------------------

@dataclass(frozen=True)
class ToyConfig:
    n: int = 5000
    seed: int = 1
    rho: float = 0.75
    generator: str = "toy4"

    def __post_init__(self):
        if not 0 < self.rho <= 1:
            raise ConfigError("rho must lie in (0, 1]")
        if self.n < 10:
            raise ConfigError("n must be at least 10")
        if self.generator not in ("toy4", "sinehill"):
            raise ConfigError(f"unknown generator {self.generator!r}")


@dataclass
class SimulatedData:
    dataset: Dataset
    signal: np.ndarray
    noise_scale: float
    config: ToyConfig = field(default_factory=ToyConfig)


def toy_signal(X: np.ndarray) -> np.ndarray:
    """Noise-free toy structure x1^2 + sin(2*pi*x2)/2 + x3*x4 (x5, x6 unused)."""
    return X[:, 0] ** 2 + 0.5 * np.sin(2 * np.pi * X[:, 1]) + X[:, 2] * X[:, 3]


def sinehill_signal(X: np.ndarray) -> np.ndarray:
    return np.sin(X[:, 0]) ** 8 * np.sin(X[:, 1]) ** 8


def solve_noise_scale(signal: np.ndarray, noise: np.ndarray, rho: float, tol: float = 1e-12) -> float:
    """Bisect the scale k so that the sample correlation of signal and signal + k*noise equals rho."""
    if np.std(signal) == 0:
        raise DegenerateError("signal has zero variance; correlation target unreachable")
    if rho == 1:
        return 0.0

    def cor(k):
        return np.corrcoef(signal, signal + k * noise)[0, 1]

    lo, hi = 0.0, float(np.std(signal))
    while cor(hi) > rho:
        hi *= 2
        if hi > 1e12:
            raise DegenerateError(f"cannot reach correlation {rho}")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if cor(mid) > rho:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def simulate_toy(config: ToyConfig = ToyConfig()) -> SimulatedData:
    """Draw a toy regression problem with a known structure.

    ``toy4``: six Uniform(-1, 1) features, signal x1^2 + sin(2 pi x2)/2 + x3 x4.
    ``sinehill``: two Uniform(0, 2 pi) features, signal sin(x1)^8 sin(x2)^8.
    Gaussian noise is scaled so the realized cor(signal, y) equals ``rho``.
    """
    rng = np.random.default_rng(config.seed)
    if config.generator == "toy4":
        X = rng.uniform(-1.0, 1.0, size=(config.n, 6))
        g = toy_signal(X)
    else:
        X = rng.uniform(0.0, 2 * math.pi, size=(config.n, 2))
        g = sinehill_signal(X)
    eps = rng.standard_normal(config.n)
    k = solve_noise_scale(g, eps, config.rho)
    y = g + k * eps
    schema = Schema(tuple(FeatureSpec(f"x{j + 1}") for j in range(X.shape[1])), "y", REGRESSION)
    return SimulatedData(Dataset(schema, X, y), g, k, config)


def bin_target(dataset: Dataset, n_bins: int = 3) -> Dataset:
    """Turn a regression dataset into a classification one by quantile-binning the target."""
    edges = np.quantile(dataset.y, np.linspace(0, 1, n_bins + 1)[1:-1])
    codes = np.searchsorted(edges, dataset.y, side="right")
    classes = tuple(f"bin{k + 1}" for k in range(n_bins))
    schema = Schema(dataset.schema.features, dataset.schema.target, CLASSIFICATION, classes)
    return Dataset(schema, dataset.X, codes)
