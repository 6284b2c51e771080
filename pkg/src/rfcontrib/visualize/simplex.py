"""Barycentric embedding of 3-class probability vectors in the 2-simplex."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, DegenerateError

VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])


def _check_dim(p: np.ndarray) -> None:
    if p.shape[-1] != 3:
        raise ConfigError(f"simplex plots support exactly 3 classes, got {p.shape[-1]}")


def simplex_coords(p) -> np.ndarray:
    """Map probability vectors (..., 3) to 2D points: class 1 at (0, 0), class 2 at (1, 0), class 3 at the apex."""
    p = np.asarray(p, dtype=float)
    _check_dim(p)
    flat = p.reshape(-1, 3)
    bad = np.nonzero((flat < -1e-12).any(axis=1) | (np.abs(flat.sum(axis=1) - 1) > 1e-9))[0]
    if bad.size:
        raise DegenerateError(f"row {bad[0]} is not a probability vector: {flat[bad[0]].tolist()}")
    return p @ VERTICES


def clip_to_simplex(p) -> tuple[np.ndarray, int]:
    """Clip negative entries to zero and renormalize; returns the points and how many rows changed."""
    p = np.array(p, dtype=float)
    _check_dim(p)
    neg = (p < 0).any(axis=1)
    q = np.clip(p, 0.0, None)
    q /= q.sum(axis=1, keepdims=True)
    return q, int(neg.sum())


def simplex_outline() -> np.ndarray:
    return np.vstack([VERTICES, VERTICES[:1]])
