"""Versioned ``.npz`` checkpoints of named parameter tensors.

Per-module parameters (names starting with ``module.``) are stored one array
per module, e.g. ``module.3.cell.W_in``. The archive also holds a JSON
header with the format version, the model description and the seed.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .models import SequenceModel
from .rim import AlphaTRim, RimConfig

FORMAT = "alpharim-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _expand(params: dict) -> dict:
    out = {}
    for name, arr in params.items():
        arr = np.asarray(arr, dtype=np.float64)
        if name.startswith("module."):
            rest = name[len("module."):]
            for k in range(arr.shape[0]):
                out[f"module.{k}.{rest}"] = arr[k]
        else:
            out[name] = arr
    return out


def _collapse(arrays: dict) -> dict:
    stacked: dict[str, dict[int, np.ndarray]] = {}
    out = {}
    for name, arr in arrays.items():
        parts = name.split(".")
        if parts[0] == "module" and len(parts) > 2 and parts[1].isdigit():
            stacked.setdefault("module." + ".".join(parts[2:]), {})[int(parts[1])] = arr
        else:
            out[name] = arr
    for name, per in stacked.items():
        if sorted(per) != list(range(len(per))):
            raise CheckpointError(f"{name}: module indices {sorted(per)} are not contiguous")
        out[name] = np.stack([per[k] for k in range(len(per))])
    return out


def model_from_description(desc: dict):
    desc = dict(desc)
    kind = desc.pop("kind")
    if kind == "alpha_t_rim":
        return AlphaTRim(RimConfig(strict_lookback=False, **desc))
    return SequenceModel(kind, desc["n_features"], desc["units"], desc["lookback"],
                         desc.get("horizon", 5), desc.get("dropout", 0.0))


def save_checkpoint(path, model, params: dict, seed: int, extra: dict | None = None) -> Path:
    path = Path(path)
    header = {"format": FORMAT, "version": VERSION, "model": model.describe(), "seed": int(seed),
              "extra": extra or {}}
    arrays = _expand(params)
    if "__header__" in arrays:
        raise CheckpointError("reserved parameter name")
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.array(json.dumps(header, sort_keys=True)), **arrays)
    return path


def load_checkpoint(path, expect_model: dict | None = None):
    """Return ``(model, params, header)``; shapes are checked against the model.

    ``expect_model`` (a ``describe()`` dict) makes loading fail unless the
    stored model description matches it exactly.
    """
    with np.load(path, allow_pickle=False) as z:
        if "__header__" not in z:
            raise CheckpointError(f"{path}: missing header")
        header = json.loads(str(z["__header__"]))
        arrays = {k: z[k] for k in z.files if k != "__header__"}
    if header.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not a {FORMAT} file")
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported version {header.get('version')}")
    if expect_model is not None and header["model"] != expect_model:
        raise CheckpointError(f"{path}: model configuration differs from the expected one")
    model = model_from_description(header["model"])
    params = _collapse(arrays)
    shapes = {k: tuple(v) for k, v in model.param_shapes().items()}
    if set(shapes) != set(params):
        raise CheckpointError(
            f"{path}: parameter names differ (missing {sorted(set(shapes) - set(params))}, "
            f"unexpected {sorted(set(params) - set(shapes))})"
        )
    for k, shape in shapes.items():
        if params[k].shape != shape:
            raise CheckpointError(f"{path}: {k} has shape {params[k].shape}, model expects {shape}")
    return model, params, header
