"""JSON parameter checkpoints.

File layout (version 1)::

    {"format": "maneuver-graph-checkpoint", "version": 1,
     "config": {...model config...},
     "params": {"mrgcn.0.W_r.top_left": {"shape": [128, 128], "data": [...]}, ...}}

``data`` is the row-major float64 array; Python's shortest-repr float
formatting makes the JSON round trip bit-exact.
"""

from __future__ import annotations

import json
import os
from typing import Mapping, Optional

import numpy as np

from .tensor import Tensor

FORMAT = "maneuver-graph-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def params_to_dict(params: Mapping[str, Tensor]) -> dict:
    return {
        name: {"shape": list(p.shape), "data": [float(v) for v in p.data.reshape(-1)]}
        for name, p in sorted(params.items())
    }


def params_from_dict(blob: Mapping) -> dict[str, Tensor]:
    out = {}
    for name, entry in blob.items():
        try:
            shape = tuple(int(s) for s in entry["shape"])
            data = np.asarray(entry["data"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"parameter {name!r}: malformed entry ({exc})") from exc
        if any(s <= 0 for s in shape) or int(np.prod(shape)) != data.size:
            raise CheckpointError(f"parameter {name!r}: shape {shape} does not match {data.size} values")
        out[name] = Tensor(data.reshape(shape), requires_grad=True)
    return out


def save_checkpoint(path: str, params: Mapping[str, Tensor], config: Optional[dict] = None) -> None:
    payload = {"format": FORMAT, "version": VERSION, "config": config or {}, "params": params_to_dict(params)}
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path: str) -> tuple[dict[str, Tensor], dict]:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not valid JSON ({exc})") from exc
    if payload.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not a {FORMAT} file")
    if payload.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {payload.get('version')!r}")
    return params_from_dict(payload["params"]), payload.get("config", {})
