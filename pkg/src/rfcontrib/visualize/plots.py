"""Plot bundles: the data behind each figure, independent of rendering.

A bundle holds a point table (x, y, optional z, rgb, row id, optional series),
an optional fitted overlay from the GOV estimator and a dict of annotations.
Renderers and the CSV sidecar writer read only the bundle.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..data import Dataset
from ..decompose import ContributionMatrix
from ..errors import ConfigError, DegenerateError
from ..forest import OOBPredictions
from ..gov import GovReport, GovRequest, class_weighted_gov, gov_score, knn_estimate
from .colors import CLASS_PALETTE, ColorGradient, class_gradient, feature_gradient
from .simplex import clip_to_simplex, simplex_coords

MAIN_EFFECT = "main_effect"
INTERACTION = "interaction3d"
SIMPLEX = "simplex"
ALIGNED = "aligned_class"
CURVE = "curve"

SURFACE_RES = 20
CURVE_RES = 100


@dataclass
class PlotBundle:
    kind: str
    title: str
    labels: dict[str, str]
    points: dict[str, np.ndarray]
    overlay: dict | None = None
    annotations: dict = field(default_factory=dict)

    @property
    def n_points(self) -> int:
        return int(self.points["x"].shape[0])

    @property
    def is_3d(self) -> bool:
        return "z" in self.points

    def columns(self) -> list[str]:
        order = ["row_id", "x", "y", "z", "series", "r", "g", "b"]
        return [c for c in order if c in self.points]

    def write_csv(self, path: str | Path) -> None:
        cols = self.columns()
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([self.labels.get(c, c) if c in ("x", "y", "z") else c for c in cols])
            for i in range(self.n_points):
                row = []
                for c in cols:
                    v = self.points[c][i]
                    row.append(int(v) if c == "row_id" else (v if isinstance(v, str) else repr(float(v))))
                w.writerow(row)


def _point_table(row_ids, x, y, rgb, z=None, series=None) -> dict[str, np.ndarray]:
    pts = {"row_id": np.asarray(row_ids), "x": np.asarray(x, float), "y": np.asarray(y, float)}
    if z is not None:
        pts["z"] = np.asarray(z, float)
    if series is not None:
        pts["series"] = np.asarray(series, dtype=object)
    rgb = np.asarray(rgb, float).reshape(-1, 3)
    pts["r"], pts["g"], pts["b"] = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    return pts


def _class_index(contributions: ContributionMatrix, class_index: int | None) -> int:
    if not contributions.is_classification:
        return 0
    if class_index is None:
        raise ConfigError("classification plots need a class index")
    if not 0 <= class_index < contributions.n_outputs:
        raise ConfigError(f"class index {class_index} out of range")
    return class_index


def _gov_annotations(report: GovReport | None, note: str = "") -> dict:
    if report is None:
        return {"gov": None, "gov_note": note}
    out = {"gov": report.score, "gov_k": report.k, "gov_note": report.note or note}
    if report.per_class:
        out["gov_per_class"] = report.per_class
    return out


def _default_gradient(dataset: Dataset, gradient: ColorGradient | None) -> np.ndarray:
    if gradient is None:
        return np.tile(CLASS_PALETTE[0], (dataset.n_rows, 1))
    if gradient.rgb.shape[0] != dataset.n_rows:
        raise ConfigError("gradient has a different row count than the dataset")
    return gradient.rgb


def main_effect_plot(contributions: ContributionMatrix, dataset: Dataset, feature: int | str,
                     gradient: ColorGradient | None = None, with_gov: bool = True,
                     class_index: int | None = None, k: int | None = None) -> PlotBundle:
    """Contributions of one feature against its values, with the GOV curve as overlay."""
    j = dataset.schema.index(feature)
    c = _class_index(contributions, class_index)
    rows = contributions.defined
    x = dataset.X[rows, j]
    y = contributions.feature(j)[rows, c]
    rgb = _default_gradient(dataset, gradient)[rows]
    name = dataset.names[j]
    cls = contributions.class_labels[c] if contributions.is_classification else None
    labels = {"x": name, "y": f"contribution of {name}" + (f" to P({cls})" if cls else "")}
    bundle = PlotBundle(MAIN_EFFECT, f"{name}" + (f" [{cls}]" if cls else ""), labels,
                        _point_table(dataset.row_ids[rows], x, y, rgb),
                        annotations={"feature": name, "class": cls})
    if with_gov:
        try:
            req = GovRequest((j,), (j,), c if contributions.is_classification else None, k)
            report = gov_score(contributions, dataset, req)
        except DegenerateError as exc:
            bundle.annotations.update(_gov_annotations(None, f"no overlay: {exc}"))
            return bundle
        xs = np.unique(x)
        if xs.size > CURVE_RES:
            xs = np.linspace(xs[0], xs[-1], CURVE_RES)
        mu, sd = x.mean(), x.std()
        curve = knn_estimate((x - mu) / sd, y, (xs - mu) / sd, report.k)
        bundle.overlay = {"kind": "curve", "x": xs, "y": curve}
        bundle.annotations.update(_gov_annotations(report))
    return bundle


def main_effect_plots(contributions: ContributionMatrix, dataset: Dataset, features: Sequence | None = None,
                      gradient: ColorGradient | None = None, with_gov: bool = True,
                      class_index: int | None = None, k: int | None = None) -> list[PlotBundle]:
    """One main-effect bundle per feature; with ``features=None`` all features, largest contribution variance first."""
    if features is None:
        var = contributions.variances()
        idx = [int(j) for j in np.argsort(-var, kind="stable")]
    else:
        idx = [dataset.schema.index(f) for f in features]
    return [main_effect_plot(contributions, dataset, j, gradient, with_gov, class_index, k) for j in idx]


def interaction_plot(contributions: ContributionMatrix, dataset: Dataset, features: tuple,
                     response: str = "sum", gradient: ColorGradient | None = None, with_gov: bool = True,
                     class_index: int | None = None, k: int | None = None) -> PlotBundle:
    """Contributions over two feature axes; ``response`` is 'single' (feature a) or 'sum' (a + b)."""
    a, b = (dataset.schema.index(f) for f in features)
    if a == b:
        raise ConfigError("interaction plots need two different features")
    if response not in ("single", "sum"):
        raise ConfigError(f"response must be 'single' or 'sum', got {response!r}")
    c = _class_index(contributions, class_index)
    rows = contributions.defined
    resp_feats = (a,) if response == "single" else (a, b)
    z = sum(contributions.feature(f)[rows, c] for f in resp_feats)
    xa, xb = dataset.X[rows, a], dataset.X[rows, b]
    na, nb = dataset.names[a], dataset.names[b]
    cls = contributions.class_labels[c] if contributions.is_classification else None
    zlabel = "+".join(dataset.names[f] for f in resp_feats) + " contribution"
    bundle = PlotBundle(INTERACTION, f"{'+'.join(dataset.names[f] for f in resp_feats)} over {na}, {nb}",
                        {"x": na, "y": nb, "z": zlabel},
                        _point_table(dataset.row_ids[rows], xa, xb, _default_gradient(dataset, gradient)[rows], z=z),
                        annotations={"features": [na, nb], "response": response, "class": cls})
    if with_gov:
        try:
            req = GovRequest(resp_feats, (a, b), c if contributions.is_classification else None, k)
            report = gov_score(contributions, dataset, req)
        except DegenerateError as exc:
            bundle.annotations.update(_gov_annotations(None, f"no overlay: {exc}"))
            return bundle
        ctx = np.column_stack([xa, xb])
        mu, sd = ctx.mean(axis=0), ctx.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        ga = np.linspace(xa.min(), xa.max(), SURFACE_RES)
        gb = np.linspace(xb.min(), xb.max(), SURFACE_RES)
        GA, GB = np.meshgrid(ga, gb, indexing="ij")
        q = (np.column_stack([GA.ravel(), GB.ravel()]) - mu) / sd
        surf = knn_estimate((ctx - mu) / sd, z, q, report.k).reshape(SURFACE_RES, SURFACE_RES)
        bundle.overlay = {"kind": "surface", "x": ga, "y": gb, "z": surf}
        bundle.annotations.update(_gov_annotations(report))
    return bundle


def effective_prior(contributions: ContributionMatrix) -> np.ndarray:
    """Average root-node prediction: base rate plus the mean bootstrap term over defined rows."""
    rows = contributions.defined
    return contributions.base_rate + contributions.bootstrap_term()[rows].mean(axis=0)


def _simplex_annotations(contributions: ContributionMatrix) -> dict:
    prior = effective_prior(contributions)
    return {"base_rate": prior.tolist(), "base_rate_xy": simplex_coords(prior / prior.sum()).tolist(),
            "classes": contributions.class_labels}


def _require_three(contributions: ContributionMatrix) -> None:
    if contributions.n_outputs != 3 or not contributions.is_classification:
        raise ConfigError(f"simplex plots support exactly 3 classes, got {contributions.n_outputs}")


def feature_simplex(contributions: ContributionMatrix, dataset: Dataset, feature: int | str,
                    gradient: ColorGradient, with_gov: bool = False, k: int | None = None) -> PlotBundle:
    """Main effect of one feature in the probability simplex at base_rate + contribution, clipped to the simplex."""
    _require_three(contributions)
    j = dataset.schema.index(feature)
    rows = contributions.defined
    p = contributions.base_rate[None, :] + contributions.feature(j)[rows]
    p, clipped = clip_to_simplex(p)
    xy = simplex_coords(p)
    name = dataset.names[j]
    bundle = PlotBundle(SIMPLEX, f"{name} ({gradient.source})", {"x": "simplex x", "y": "simplex y"},
                        _point_table(dataset.row_ids[rows], xy[:, 0], xy[:, 1], _default_gradient(dataset, gradient)[rows]),
                        annotations={"feature": name, "coloring": gradient.source, "clipped": clipped,
                                     **_simplex_annotations(contributions)})
    if with_gov:
        try:
            report = class_weighted_gov(contributions, dataset, [j], [j], k)
        except DegenerateError as exc:
            bundle.annotations.update(_gov_annotations(None, f"no overlay: {exc}"))
            return bundle
        # fitted main effect: per-class GOV estimates traced along the feature
        x = dataset.X[rows, j]
        xs = np.unique(x)
        if xs.size > CURVE_RES:
            xs = np.linspace(xs[0], xs[-1], CURVE_RES)
        mu, sd = x.mean(), x.std()
        est = np.column_stack([knn_estimate((x - mu) / sd, contributions.feature(j)[rows, c], (xs - mu) / sd, report.k)
                               for c in range(3)])
        path, _ = clip_to_simplex(contributions.base_rate[None, :] + est)
        pxy = simplex_coords(path)
        bundle.overlay = {"kind": "curve", "x": pxy[:, 0], "y": pxy[:, 1], "feature_values": xs}
        bundle.annotations.update(_gov_annotations(report))
    return bundle


def simplex_pair(contributions: ContributionMatrix, dataset: Dataset, feature: int | str,
                 gradient: ColorGradient | None = None, with_gov: bool = False,
                 k: int | None = None) -> list[PlotBundle]:
    """Class-coloured and feature-coloured simplexes for one feature."""
    _require_three(contributions)
    feat_grad = gradient if gradient is not None else feature_gradient(dataset, feature)
    return [feature_simplex(contributions, dataset, feature, class_gradient(dataset), with_gov, k),
            feature_simplex(contributions, dataset, feature, feat_grad, False, k)]


def prediction_simplex(predictions: OOBPredictions | np.ndarray, contributions: ContributionMatrix,
                       dataset: Dataset, gradient: ColorGradient | None = None) -> PlotBundle:
    """Overall model predictions (OOB by default) in the simplex."""
    _require_three(contributions)
    if isinstance(predictions, OOBPredictions):
        rows, p = predictions.defined, predictions.values
    else:
        p = np.asarray(predictions)
        rows = np.ones(p.shape[0], dtype=bool)
    xy = simplex_coords(p[rows])
    grad = gradient if gradient is not None else class_gradient(dataset)
    return PlotBundle(SIMPLEX, f"predictions ({grad.source})", {"x": "simplex x", "y": "simplex y"},
                      _point_table(dataset.row_ids[rows], xy[:, 0], xy[:, 1], grad.rgb[rows]),
                      annotations={"feature": None, "coloring": grad.source, "clipped": 0,
                                   **_simplex_annotations(contributions)})


def aligned_class_plot(contributions: ContributionMatrix, dataset: Dataset, feature: int | str) -> PlotBundle:
    """Every row drawn once per class: x = feature value, y = that class's contribution."""
    if not contributions.is_classification:
        raise ConfigError("aligned class plots need a classification model")
    j = dataset.schema.index(feature)
    rows = contributions.defined
    F = contributions.feature(j)[rows]
    resid = float(np.abs(F.sum(axis=1)).max()) if F.size else 0.0
    if resid > 1e-9:
        raise DegenerateError(f"contributions of {dataset.names[j]!r} are not zero-sum (residual {resid:.3e})")
    n, kk = F.shape
    labels = contributions.class_labels
    row_ids = np.repeat(dataset.row_ids[rows], kk)
    x = np.repeat(dataset.X[rows, j], kk)
    series = np.tile(np.array(labels, dtype=object), n)
    rgb = np.tile(CLASS_PALETTE[np.arange(kk) % len(CLASS_PALETTE)], (n, 1))
    name = dataset.names[j]
    return PlotBundle(ALIGNED, f"{name} by class", {"x": name, "y": "contribution to class probability"},
                      _point_table(row_ids, x, F.ravel(), rgb, series=series),
                      annotations={"feature": name, "classes": labels, "zero_sum_residual": resid})


def curve_plot(table, class_index: int = 0, max_curves: int = 200) -> PlotBundle:
    """SA, PD or ICE curves of one varied feature (ICE is thinned to ``max_curves`` rows)."""
    if len(table.features) != 1:
        raise ConfigError("curve plots show one varied feature")
    grid = table.grid[:, 0]
    label = table.output_labels[class_index]
    if table.values.ndim == 2:
        lines = [table.values[:, class_index]]
        ids = [table.kind]
    else:
        step = max(1, table.values.shape[0] // max_curves)
        sel = np.arange(0, table.values.shape[0], step)
        lines = [table.values[i, :, class_index] for i in sel]
        ids = [int(table.row_ids[i]) for i in sel]
    return PlotBundle(CURVE, f"{table.kind.upper()} {table.features[0]}",
                      {"x": table.features[0], "y": f"prediction ({label})"},
                      _point_table(np.zeros(0, int), np.zeros(0), np.zeros(0), np.zeros((0, 3))),
                      overlay={"kind": "lines", "x": grid, "lines": lines, "ids": ids},
                      annotations={"curve": table.kind, "output": label})
