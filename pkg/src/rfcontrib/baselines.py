"""Sensitivity analysis, partial dependence and ICE curves.

SA averages and then projects: one prediction curve through the training
centroid. PD projects and then averages: for every grid point, every training
row is moved onto the grid point and the predictions are averaged. ICE keeps
the per-row curves that PD averages.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset
from .errors import ConfigError
from .forest import ForestModel, predict

MAX_GRID = 50


@dataclass(frozen=True)
class GridSpec:
    features: tuple[int, ...]
    grids: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.features) not in (1, 2):
            raise ConfigError("a grid varies one or two features")
        if len(set(self.features)) != len(self.features):
            raise ConfigError("varied features must be distinct")
        if len(self.grids) != len(self.features) or any(len(g) == 0 for g in self.grids):
            raise ConfigError("every varied feature needs a non-empty grid")

    def points(self) -> np.ndarray:
        """(G, m) grid points, first feature varying slowest."""
        return np.array(list(itertools.product(*self.grids)), dtype=float).reshape(-1, len(self.features))


def default_grid(dataset: Dataset, feature: int, max_points: int = MAX_GRID) -> np.ndarray:
    """Sorted unique observed values; above ``max_points`` use evenly spaced quantiles. Categorical: all levels."""
    spec = dataset.schema.features[feature]
    if spec.is_categorical:
        return np.arange(1, len(spec.levels) + 1, dtype=float)
    vals = np.unique(dataset.X[:, feature])
    if vals.size > max_points:
        vals = np.unique(np.quantile(dataset.X[:, feature], np.linspace(0, 1, max_points)))
    return vals


def uniform_grid(dataset: Dataset, feature: int, resolution: int) -> np.ndarray:
    col = dataset.X[:, feature]
    return np.linspace(col.min(), col.max(), resolution)


def make_grid(dataset: Dataset, features: Sequence[int], resolution: int | None = None) -> GridSpec:
    grids = []
    for f in features:
        if resolution is None or dataset.schema.features[f].is_categorical:
            grids.append(default_grid(dataset, f))
        else:
            grids.append(uniform_grid(dataset, f, resolution))
    return GridSpec(tuple(features), tuple(grids))


def centroid(dataset: Dataset) -> np.ndarray:
    """Numeric means; categorical modes (lowest level code on ties)."""
    row = dataset.X.mean(axis=0)
    for j, spec in enumerate(dataset.schema.features):
        if spec.is_categorical:
            counts = np.bincount(dataset.X[:, j].astype(int), minlength=len(spec.levels) + 1)
            row[j] = float(np.argmax(counts[1:]) + 1)
    return row


@dataclass
class CurveTable:
    """Predictions over a grid. ``values`` is (G, c) for SA/PD and (N, G, c) for ICE."""

    kind: str
    features: list[str]
    grid: np.ndarray
    values: np.ndarray
    output_labels: list[str]
    row_ids: np.ndarray | None = None

    def to_rows(self) -> list[list]:
        rows = []
        if self.values.ndim == 2:
            label = self.kind.upper()
            for g, point in enumerate(self.grid):
                rows.append([*point.tolist(), label, *self.values[g].tolist()])
        else:
            for i, rid in enumerate(self.row_ids):
                for g, point in enumerate(self.grid):
                    rows.append([*point.tolist(), int(rid), *self.values[i, g].tolist()])
        return rows

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([*self.features, "row_id", *self.output_labels])
            for r in self.to_rows():
                w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def _labels(model: ForestModel) -> list[str]:
    return list(model.schema.classes) or ["value"]


def _as_2d(pred: np.ndarray) -> np.ndarray:
    return pred[:, None] if pred.ndim == 1 else pred


def _ice_block(model: ForestModel, X: np.ndarray, grid: GridSpec, threads) -> np.ndarray:
    pts = grid.points()
    n = X.shape[0]
    block = np.tile(X, (pts.shape[0], 1))
    for g in range(pts.shape[0]):
        block[g * n:(g + 1) * n, list(grid.features)] = pts[g]
    pred = _as_2d(predict(model, block, threads))
    return pred.reshape(pts.shape[0], n, -1).transpose(1, 0, 2)


def sensitivity_analysis(model: ForestModel, dataset: Dataset, grid: GridSpec, threads: int | None = None) -> CurveTable:
    """Predictions along the grid with every other feature held at the training centroid."""
    vals = _ice_block(model, centroid(dataset)[None, :], grid, threads)[0]
    return CurveTable("sa", [dataset.names[f] for f in grid.features], grid.points(), vals, _labels(model))


def ice_curves(model: ForestModel, dataset: Dataset, grid: GridSpec, centered: bool = False,
               threads: int | None = None) -> CurveTable:
    """One prediction curve per training row; ``centered`` subtracts each curve's value at the first grid point."""
    if len(grid.features) != 1:
        raise ConfigError("ICE curves vary a single feature")
    vals = _ice_block(model, dataset.X, grid, threads)
    if centered:
        vals = vals - vals[:, :1, :]
    return CurveTable("ice", [dataset.names[f] for f in grid.features], grid.points(), vals, _labels(model),
                      dataset.row_ids)


def partial_dependence(model: ForestModel, dataset: Dataset, grid: GridSpec, threads: int | None = None) -> CurveTable:
    """Mean over all training rows of the prediction with the varied features set to each grid point."""
    vals = _ice_block(model, dataset.X, grid, threads).mean(axis=0)
    return CurveTable("pd", [dataset.names[f] for f in grid.features], grid.points(), vals, _labels(model))


def pd_from_ice(ice: CurveTable) -> CurveTable:
    """Partial dependence as the mean of already computed (uncentered) ICE curves."""
    if ice.kind != "ice":
        raise ConfigError("expected an ICE table")
    return CurveTable("pd", ice.features, ice.grid, ice.values.mean(axis=0), ice.output_labels)
