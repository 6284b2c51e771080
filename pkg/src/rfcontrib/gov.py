"""Goodness-of-visualization (GOV).

A plot shows some contribution response (one feature's contributions, or a
sum over several) against a context of one or more feature axes. GOV asks how
much of that response the context explains: each row's response is predicted
from the other rows by a Gaussian-weighted k-nearest-neighbour estimate in
the standardized context, and GOV is the squared Pearson correlation between
those leave-one-out estimates and the response.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels as K
from .data import Dataset
from .decompose import ContributionMatrix
from .errors import ConfigError, DegenerateError


def default_k(n: int) -> int:
    """round(sqrt(n)) clamped to [10, n - 1]."""
    return int(min(max(round(np.sqrt(n)), 10), n - 1))


def standardize(context: np.ndarray) -> np.ndarray:
    """Z-score each column; constant columns become 0. Raises if every column is constant."""
    context = np.asarray(context, dtype=float)
    if context.ndim == 1:
        context = context[:, None]
    sd = context.std(axis=0)
    if not np.any(sd > 0):
        raise DegenerateError("all context values are identical; the estimator is degenerate")
    z = np.zeros_like(context)
    ok = sd > 0
    z[:, ok] = (context[:, ok] - context[:, ok].mean(axis=0)) / sd[ok]
    return np.ascontiguousarray(z)


def _check_k(n: int, k: int) -> int:
    if n < 2:
        raise DegenerateError("need at least 2 rows for a leave-one-out estimate")
    if not 1 <= k <= n - 1:
        raise ConfigError(f"k must lie in 1..{n - 1}, got {k}")
    return int(k)


def loo_knn_estimate(context: np.ndarray, responses: np.ndarray, k: int | None = None) -> np.ndarray:
    """Leave-one-out Gaussian k-NN estimate of each response from the other rows.

    ``context`` should already be standardized. Weights are
    ``exp(-(dist / h)^2)`` over the k nearest other rows, with ``h`` the k-th
    neighbour distance.
    """
    ctx = np.ascontiguousarray(np.asarray(context, dtype=float).reshape(len(responses), -1))
    resp = np.ascontiguousarray(responses, dtype=float)
    n = resp.shape[0]
    k = _check_k(n, default_k(n) if k is None else k)
    out = np.empty(n)
    if not K.knn_gauss(ctx, resp, ctx, k, True, out):
        raise DegenerateError("all context values are identical; the estimator is degenerate")
    return out


def knn_estimate(context: np.ndarray, responses: np.ndarray, query: np.ndarray, k: int | None = None) -> np.ndarray:
    """Same estimator evaluated at new points (used to draw fitted curves and surfaces)."""
    ctx = np.ascontiguousarray(np.asarray(context, dtype=float).reshape(len(responses), -1))
    q = np.ascontiguousarray(np.asarray(query, dtype=float).reshape(-1, ctx.shape[1]))
    resp = np.ascontiguousarray(responses, dtype=float)
    n = resp.shape[0]
    k = int(min(max(1, default_k(n) if k is None else k), n))
    out = np.empty(q.shape[0])
    if not K.knn_gauss(ctx, resp, q, k, False, out):
        raise DegenerateError("query coincides with a degenerate context")
    return out


@dataclass(frozen=True)
class GovRequest:
    """Response features (summed) explained by context features; class index for classification."""

    features: tuple[int, ...]
    context: tuple[int, ...]
    class_index: int | None = None
    k: int | None = None

    def __post_init__(self):
        if not self.features or not self.context:
            raise ConfigError("GOV needs at least one response feature and one context feature")


@dataclass
class GovReport:
    features: list[str]
    context: list[str]
    score: float | None
    estimates: np.ndarray
    responses: np.ndarray
    rows_used: np.ndarray
    k: int
    class_label: str | None = None
    per_class: dict[str, float | None] = field(default_factory=dict)
    note: str = ""

    @property
    def defined(self) -> bool:
        return self.score is not None

    @property
    def residuals(self) -> np.ndarray:
        return self.responses - self.estimates

    def summary(self) -> dict:
        return {
            "features": self.features,
            "context": self.context,
            "class": self.class_label,
            "score": self.score,
            "per_class": self.per_class,
            "k": self.k,
            "n_rows": int(self.rows_used.sum()),
            "note": self.note,
        }


def _squared_cor(a: np.ndarray, b: np.ndarray) -> float | None:
    if np.std(a) == 0 or np.std(b) == 0:
        return None
    r = np.corrcoef(a, b)[0, 1]
    return float(min(1.0, max(0.0, r * r)))


def gov_score(contributions: ContributionMatrix, dataset: Dataset, request: GovRequest) -> GovReport:
    """GOV of one plot: response = sum of the requested features' contributions."""
    names = dataset.names
    if contributions.n_rows != dataset.n_rows:
        raise ConfigError("contributions and dataset have different row counts")
    c = request.class_index
    if contributions.is_classification:
        if c is None:
            raise ConfigError("classification GOV needs a class index")
    else:
        c = 0
    rows = contributions.defined
    resp = sum(contributions.feature(j)[:, c] for j in request.features)[rows]
    ctx = standardize(dataset.X[rows][:, list(request.context)])
    n = int(rows.sum())
    k = _check_k(n, default_k(n) if request.k is None else request.k)
    est = loo_knn_estimate(ctx, resp, k)
    score = _squared_cor(est, resp)
    note = "" if score is not None else "undefined: zero variance in contributions or estimates"
    label = contributions.class_labels[c] if contributions.is_classification else None
    return GovReport([names[j] for j in request.features], [names[j] for j in request.context], score, est, resp,
                     rows, k, label, note=note)


def class_weighted_gov(contributions: ContributionMatrix, dataset: Dataset, features: Sequence[int],
                       context: Sequence[int], k: int | None = None) -> GovReport:
    """Per-class GOV plus their contribution-variance-weighted mean (classification)."""
    reports = [gov_score(contributions, dataset, GovRequest(tuple(features), tuple(context), c, k))
               for c in range(contributions.n_outputs)]
    per_class = {r.class_label: r.score for r in reports}
    weights = np.array([np.var(r.responses) for r in reports])
    ok = np.array([r.score is not None for r in reports])
    if ok.any() and weights[ok].sum() > 0:
        score = float(np.sum(weights[ok] * np.array([r.score for r in reports if r.score is not None]))
                      / weights[ok].sum())
        note = ""
    else:
        score, note = None, "undefined for every class"
    best = reports[int(np.argmax(weights))]
    return GovReport(best.features, best.context, score, best.estimates, best.responses, best.rows_used,
                     best.k, None, per_class, note)


def main_effect_gov_all(contributions: ContributionMatrix, dataset: Dataset, k: int | None = None) -> list[GovReport]:
    """Main-effect GOV (context = the feature itself) for every feature, in column order."""
    out = []
    for j in range(dataset.n_features):
        if contributions.is_classification:
            out.append(class_weighted_gov(contributions, dataset, [j], [j], k))
        else:
            out.append(gov_score(contributions, dataset, GovRequest((j,), (j,), None, k)))
    return out


def format_table(reports: Sequence[GovReport]) -> str:
    lines = [f"{'response':<28} {'context':<28} {'GOV':>7}"]
    for r in reports:
        score = "undef" if r.score is None else f"{r.score:.4f}"
        lines.append(f"{'+'.join(r.features):<28} {','.join(r.context):<28} {score:>7}")
        for cls, s in r.per_class.items():
            lines.append(f"{'  class ' + str(cls):<57} {'undef' if s is None else f'{s:.4f}':>7}")
    return "\n".join(lines)


def write_reports_json(reports: Sequence[GovReport], path: str | Path) -> None:
    Path(path).write_text(json.dumps([r.summary() for r in reports], indent=2) + "\n", encoding="utf-8")
