"""Model files: a JSON document with a format tag, a version and a checksummed body.

Arrays are stored as base64 of their zlib-compressed little-endian bytes, so
a round trip is bit-exact. The checksum is the SHA-256 of the canonical
(sorted-key, compact) JSON encoding of the body.
"""

from __future__ import annotations

import base64
import hashlib
import json
import zlib
from pathlib import Path

import numpy as np

from .data import Schema
from .errors import ModelFormatError
from .forest import ForestModel, TrainConfig, Tree
from .rng import RNG_NAME

FORMAT = "rfcontrib-model"
VERSION = 1

_TREE_FIELDS = {
    "feature": np.int32,
    "threshold": np.float64,
    "cat_mask": np.int64,
    "left": np.int32,
    "right": np.int32,
    "count": np.int64,
    "value": np.float64,
}


def encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a)
    dt = a.dtype.newbyteorder("<")
    data = zlib.compress(a.astype(dt).tobytes(), 6)
    return {"dtype": dt.str, "shape": list(a.shape), "data": base64.b64encode(data).decode("ascii")}


def decode_array(d: dict) -> np.ndarray:
    try:
        raw = zlib.decompress(base64.b64decode(d["data"], validate=True))
        a = np.frombuffer(raw, dtype=np.dtype(d["dtype"])).reshape(d["shape"])
    except (KeyError, TypeError, ValueError, zlib.error) as exc:
        raise ModelFormatError(f"corrupt array: {exc}") from None
    return a.astype(a.dtype.newbyteorder("="))


def _canonical(body: dict) -> str:
    return json.dumps(body, sort_keys=True, separators=(",", ":"))


def model_to_body(model: ForestModel) -> dict:
    sizes = np.array([t.n_nodes for t in model.trees], np.int64)
    arrays = {name: encode_array(np.concatenate([getattr(t, name) for t in model.trees], axis=0).astype(dt))
              for name, dt in _TREE_FIELDS.items()}
    return {
        "schema": model.schema.to_dict(),
        "config": model.config.to_dict(),
        "rng": model.rng,
        "training_digest": model.training_digest,
        "base_rate": encode_array(model.base_rate),
        "in_bag": encode_array(model.in_bag),
        "tree_sizes": encode_array(sizes),
        "nodes": arrays,
    }


def model_from_body(body: dict) -> ForestModel:
    try:
        schema = Schema.from_dict(body["schema"])
        config = TrainConfig.from_dict(body["config"])
        sizes = decode_array(body["tree_sizes"])
        nodes = {name: decode_array(body["nodes"][name]) for name in _TREE_FIELDS}
        base_rate = decode_array(body["base_rate"]).copy()
        in_bag = decode_array(body["in_bag"]).copy()
        rng = body["rng"]
        digest = body["training_digest"]
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"model body is missing {exc}") from None
    if rng != RNG_NAME:
        raise ModelFormatError(f"model was trained with RNG {rng!r}, this build provides {RNG_NAME!r}")
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    if any(a.shape[0] != bounds[-1] for a in nodes.values()):
        raise ModelFormatError("node arrays disagree with tree sizes")
    trees = [Tree(**{name: np.ascontiguousarray(a[bounds[t]:bounds[t + 1]]) for name, a in nodes.items()})
             for t in range(sizes.shape[0])]
    if in_bag.shape[1] != len(trees):
        raise ModelFormatError("in-bag matrix disagrees with the number of trees")
    return ForestModel(schema, config, trees, in_bag, base_rate, digest, rng)


def dumps_model(model: ForestModel) -> str:
    body = model_to_body(model)
    checksum = hashlib.sha256(_canonical(body).encode("utf-8")).hexdigest()
    return json.dumps({"format": FORMAT, "version": VERSION, "sha256": checksum, "body": body},
                      sort_keys=True, separators=(",", ":")) + "\n"


def loads_model(text: str) -> ForestModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not a complete model document ({exc.msg} at char {exc.pos})") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ModelFormatError("not an rfcontrib model file")
    if doc.get("version") != VERSION:
        raise ModelFormatError(f"model format version {doc.get('version')!r} is not supported (expected {VERSION})")
    body = doc.get("body")
    if not isinstance(body, dict):
        raise ModelFormatError("model document has no body")
    if hashlib.sha256(_canonical(body).encode("utf-8")).hexdigest() != doc.get("sha256"):
        raise ModelFormatError("checksum mismatch: model file is corrupt")
    return model_from_body(body)


def save_model(model: ForestModel, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(dumps_model(model), encoding="utf-8")
    return path


def load_model(path: str | Path) -> ForestModel:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError:
        raise ModelFormatError(f"{path}: not a text model file") from None
    try:
        return loads_model(text)
    except ModelFormatError as exc:
        raise ModelFormatError(f"{path}: {exc}") from None
