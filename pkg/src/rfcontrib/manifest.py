"""Run manifests: what a command was asked to do and what it wrote.

Paths are stored relative to the manifest's directory and inputs by base name
and hash, so two runs of the same command into different directories produce
identical manifests.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import matplotlib
import numba
import numpy as np

from . import __version__
from .rng import RNG_NAME


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None = None
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: list[dict] = field(default_factory=list)
    timings: dict[str, float] | None = None

    def add_input(self, path: str | Path) -> None:
        path = Path(path)
        self.inputs[path.name] = file_sha256(path)

    def add_outputs(self, paths: Sequence[str | Path], base: str | Path) -> None:
        base = Path(base).resolve()
        for p in paths:
            p = Path(p).resolve()
            try:
                rel = p.relative_to(base).as_posix()
            except ValueError:
                rel = p.name
            self.outputs.append({"file": rel, "sha256": file_sha256(p)})

    def to_dict(self) -> dict:
        d = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": sorted(self.outputs, key=lambda o: o["file"]),
            "environment": {
                "rfcontrib": __version__,
                "rng": RNG_NAME,
                "numpy": np.__version__,
                "numba": numba.__version__,
                "matplotlib": matplotlib.__version__,
            },
        }
        if self.timings is not None:
            d["timings"] = {k: round(v, 3) for k, v in self.timings.items()}
        return d

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        return path


def manifest_path_for(output: str | Path) -> Path:
    """Manifest location for a single-file output: ``<output>.manifest.json`` beside it."""
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")
