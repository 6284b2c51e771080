"""Deterministic SVG rendering of plot bundles with matplotlib.

Scatter points are grouped under ``<g id="points">`` so their count can be
checked from the file. Fixed hash salt and no date metadata make repeated
renders byte-identical.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.collections import LineCollection
from matplotlib.figure import Figure
from matplotlib.lines import Line2D

from .colors import CLASS_PALETTE
from .plots import ALIGNED, CURVE, SIMPLEX, PlotBundle
from .simplex import VERTICES, simplex_outline

DEFAULT_DIMS = (5.0, 4.0)
DEFAULT_AZIM = -60.0
DEFAULT_ELEV = 25.0
POINTS_GID = "points"

_RC = {
    "svg.hashsalt": "rfcontrib",
    "svg.fonttype": "none",
    "font.size": 8,
    "axes.titlesize": 9,
}
_SVG_NS = "{http://www.w3.org/2000/svg}"


def _colors(bundle: PlotBundle) -> np.ndarray:
    if bundle.n_points == 0:
        return np.zeros((0, 3))
    return np.clip(np.column_stack([bundle.points["r"], bundle.points["g"], bundle.points["b"]]), 0.0, 1.0)


def _marker_size(n: int) -> float:
    return float(np.clip(400.0 / np.sqrt(max(n, 1)), 1.0, 20.0))


def _gov_text(bundle: PlotBundle) -> str | None:
    ann = bundle.annotations
    if "gov" not in ann:
        return None
    if ann["gov"] is None:
        return f"GOV undefined ({ann.get('gov_note', '')})"
    return f"GOV R² = {ann['gov']:.3f}"


def _draw_2d(ax, bundle: PlotBundle) -> None:
    pts = bundle.points
    sc = ax.scatter(pts["x"], pts["y"], s=_marker_size(bundle.n_points), c=_colors(bundle), linewidths=0)
    sc.set_gid(POINTS_GID)
    ov = bundle.overlay
    if ov is not None and ov["kind"] == "curve":
        ax.plot(ov["x"], ov["y"], color="black", linewidth=1.2)
    if ov is not None and ov["kind"] == "lines":
        segs = [np.column_stack([ov["x"], line]) for line in ov["lines"]]
        ax.add_collection(LineCollection(segs, colors="0.3", linewidths=0.5, alpha=0.6))
        ax.autoscale_view()
    ax.set_xlabel(bundle.labels.get("x", "x"))
    ax.set_ylabel(bundle.labels.get("y", "y"))


def _draw_simplex(ax, bundle: PlotBundle) -> None:
    out = simplex_outline()
    ax.plot(out[:, 0], out[:, 1], color="0.4", linewidth=0.8)
    classes = bundle.annotations.get("classes") or ["1", "2", "3"]
    for (vx, vy), lab, off in zip(VERTICES, classes, [(-0.03, -0.05), (0.03, -0.05), (0.0, 0.03)]):
        ax.text(vx + off[0], vy + off[1], str(lab), ha="center", va="center")
    pts = bundle.points
    sc = ax.scatter(pts["x"], pts["y"], s=_marker_size(bundle.n_points), c=_colors(bundle), linewidths=0)
    sc.set_gid(POINTS_GID)
    if bundle.overlay is not None and bundle.overlay["kind"] == "curve":
        ax.plot(bundle.overlay["x"], bundle.overlay["y"], color="0.2", linewidth=1.2)
    if "base_rate_xy" in bundle.annotations:
        bx, by = bundle.annotations["base_rate_xy"]
        ax.plot([bx], [by], marker="x", color="blue", markersize=9, markeredgewidth=2, linestyle="none")
    clipped = bundle.annotations.get("clipped", 0)
    if clipped:
        ax.text(0.98, 0.02, f"{clipped} clipped", transform=ax.transAxes, ha="right", va="bottom")
    ax.set_aspect("equal")
    ax.set_xlim(-0.08, 1.08)
    ax.set_ylim(-0.1, 0.95)
    ax.set_axis_off()


def _draw_aligned(ax, bundle: PlotBundle) -> None:
    _draw_2d(ax, bundle)
    ax.axhline(0.0, color="0.5", linewidth=0.6)
    classes = bundle.annotations.get("classes", [])
    handles = [Line2D([], [], marker="o", linestyle="none", color=CLASS_PALETTE[k % len(CLASS_PALETTE)], label=str(c))
               for k, c in enumerate(classes)]
    if handles:
        ax.legend(handles=handles, loc="best", frameon=False)


def _draw_3d(ax, bundle: PlotBundle, azim: float, elev: float) -> None:
    pts = bundle.points
    # draw order is fixed so the fitted surface stays visible over the points
    ax.computed_zorder = False
    sc = ax.scatter(pts["x"], pts["y"], pts["z"], s=0.5 * _marker_size(bundle.n_points), c=_colors(bundle),
                    linewidths=0, depthshade=False, zorder=1)
    sc.set_gid(POINTS_GID)
    ov = bundle.overlay
    if ov is not None and ov["kind"] == "surface":
        GX, GY = np.meshgrid(ov["x"], ov["y"], indexing="ij")
        ax.plot_wireframe(GX, GY, ov["z"], color="black", linewidth=0.8, rstride=1, cstride=1, zorder=2)
    ax.set_proj_type("ortho")
    ax.view_init(elev=elev, azim=azim)
    ax.set_xlabel(bundle.labels.get("x", "x"))
    ax.set_ylabel(bundle.labels.get("y", "y"))
    ax.set_zlabel(bundle.labels.get("z", "z"))


def render_figure(bundle: PlotBundle, dims=DEFAULT_DIMS, azim: float = DEFAULT_AZIM,
                  elev: float = DEFAULT_ELEV) -> Figure:
    fig = Figure(figsize=dims)
    FigureCanvasSVG(fig)
    if bundle.is_3d:
        ax = fig.add_subplot(projection="3d")
        _draw_3d(ax, bundle, azim, elev)
    else:
        ax = fig.add_subplot()
        if bundle.kind == SIMPLEX:
            _draw_simplex(ax, bundle)
        elif bundle.kind == ALIGNED:
            _draw_aligned(ax, bundle)
        else:
            _draw_2d(ax, bundle)
    ax.set_title(bundle.title)
    gov = _gov_text(bundle)
    if gov:
        fig.text(0.01, 0.01, gov, ha="left", va="bottom")
    grad = bundle.annotations.get("coloring")
    if grad and bundle.kind != CURVE:
        fig.text(0.99, 0.01, f"colour: {grad}", ha="right", va="bottom")
    return fig


def render_svg(bundle: PlotBundle, path: str | Path, dims=DEFAULT_DIMS, azim: float = DEFAULT_AZIM,
               elev: float = DEFAULT_ELEV) -> Path:
    """Write the bundle as a standalone SVG. Same bundle and options give byte-identical output."""
    path = Path(path)
    with matplotlib.rc_context(_RC):
        fig = render_figure(bundle, dims, azim, elev)
        try:
            fig.savefig(path, format="svg", metadata={"Date": None})
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def count_point_elements(svg: str | Path) -> int:
    """Number of drawn markers inside the ``points`` group of a rendered SVG."""
    root = ET.parse(svg).getroot()
    marks = (f"{_SVG_NS}use", f"{_SVG_NS}path")

    def count(el) -> int:
        if el.tag == f"{_SVG_NS}defs":
            return 0
        return int(el.tag in marks) + sum(count(ch) for ch in el)

    for g in root.iter(f"{_SVG_NS}g"):
        if g.get("id") == POINTS_GID:
            return sum(count(ch) for ch in g)
    return 0
