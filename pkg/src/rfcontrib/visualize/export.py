"""Write bundles as SVG + sidecar CSV pairs and describe them in a plot manifest."""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Sequence

from .plots import PlotBundle
from .render import DEFAULT_AZIM, DEFAULT_DIMS, DEFAULT_ELEV, render_svg


def slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", text).strip("_").lower() or "plot"


def write_plot(bundle: PlotBundle, outdir: str | Path, name: str, dims=DEFAULT_DIMS,
               azim: float = DEFAULT_AZIM, elev: float = DEFAULT_ELEV) -> dict:
    """Render ``name.svg`` and ``name.csv`` into ``outdir``; returns the manifest entry."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    svg = render_svg(bundle, outdir / f"{name}.svg", dims, azim, elev)
    csv_path = outdir / f"{name}.csv"
    bundle.write_csv(csv_path)
    ann = bundle.annotations
    return {
        "kind": bundle.kind,
        "title": bundle.title,
        "svg": svg.name,
        "csv": csv_path.name,
        "points": bundle.n_points,
        "overlay": bundle.overlay is not None,
        "gov": ann.get("gov"),
        "gov_per_class": ann.get("gov_per_class"),
        "gov_note": ann.get("gov_note") or None,
        "clipped": ann.get("clipped"),
    }


def write_plot_set(bundles: Sequence[PlotBundle], outdir: str | Path, prefix: str, **render_opts) -> list[dict]:
    """Write numbered plots ``prefix_01_<title>``; entries come back in bundle order."""
    return [write_plot(b, outdir, f"{prefix}_{i + 1:02d}_{slug(b.title)}", **render_opts)
            for i, b in enumerate(bundles)]


def write_plot_manifest(entries: Sequence[dict], path: str | Path) -> None:
    Path(path).write_text(json.dumps({"plots": list(entries)}, indent=2) + "\n", encoding="utf-8")
