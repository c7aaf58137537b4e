"""JSON checkpoints holding every named tensor as a flat row-major list.

Floats are written with Python's shortest round-trip repr, so loading
restores every value exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import DataError
from .model import ModelParams

FORMAT_VERSION = 1


def to_dict(model: ModelParams, extra: dict | None = None) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "cell_kind": model.cell_kind,
        "shape": model.shape_spec,
        "hyperparameters": {**model.hyperparameters, **(extra or {})},
        "params": {
            name: {"shape": list(arr.shape), "data": [float(x) for x in arr.ravel()]}
            for name, arr in model.tensors.items()
        },
    }


def from_dict(d: dict) -> ModelParams:
    if d.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint format {d.get('format_version')!r}")
    hp = d["hyperparameters"]
    tensors = {
        name: np.array(p["data"], dtype=np.float64).reshape(p["shape"])
        for name, p in d["params"].items()
    }
    return ModelParams(
        cell_kind=d["cell_kind"],
        hidden=d["shape"]["hidden"],
        num_layers=d["shape"]["num_layers"],
        input_dim=d["shape"]["input_dim"],
        dropout=hp["dropout"],
        alpha=hp["alpha"],
        tensors=tensors,
    )


def save_checkpoint(model: ModelParams, path, extra: dict | None = None) -> None:
    Path(path).write_text(json.dumps(to_dict(model, extra), indent=1) + "\n")


def load_checkpoint(path) -> ModelParams:
    return from_dict(json.loads(Path(path).read_text()))
