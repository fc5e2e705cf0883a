"""Single-layer recurrent baselines and helpers shared by all model kinds."""

from __future__ import annotations

import numpy as np

from .attention import dropout_mask
from .cells import CellState, cell_backward, init_cell_params, run_cell, weight_keys
from .numeric import ShapeError, glorot_uniform
from .rim import HORIZON, AlphaTRim, RimConfig

MODEL_KINDS = ("rnn", "lstm", "alpha_rnn", "alpha_t_rnn", "alpha_t_rim")
_CELL_OF = {"rnn": "rnn", "lstm": "lstm", "alpha_rnn": "alpha", "alpha_t_rnn": "alpha_t"}


class SequenceModel:
    """One recurrent cell unrolled over the window, affine readout of the last state.

    In training mode inputs are dropped at rate ``dropout`` with one mask per
    sequence shared by all time steps (the Keras ``dropout`` convention).
    """

    def __init__(self, kind: str, n_features: int, units: int, lookback: int,
                 horizon: int = HORIZON, dropout: float = 0.0):
        if kind not in _CELL_OF:
            raise ValueError(f"unknown baseline kind {kind!r}")
        if not 0.0 <= dropout < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.kind = kind
        self.cell = _CELL_OF[kind]
        self.n_features = n_features
        self.units = units
        self.lookback = lookback
        self.horizon = horizon
        self.dropout = dropout

    def init_params(self, rng) -> dict:
        cp = init_cell_params(self.cell, self.n_features, self.units, rng)
        p = {f"cell.{k}": v for k, v in cp.items()}
        p["readout.W"] = glorot_uniform(self.units, self.horizon, rng)
        p["readout.b"] = np.zeros(self.horizon)
        return p

    def param_shapes(self) -> dict:
        rng = np.random.default_rng(0)
        return {k: v.shape for k, v in self.init_params(rng).items()}

    def weight_keys(self, params) -> list[str]:
        keys = [f"cell.{k}" for k in weight_keys(self.cell)]
        return keys + ["readout.W"]

    def _cell_params(self, params):
        return {k[5:]: v for k, v in params.items() if k.startswith("cell.")}

    def forward(self, params, windows, train=False, rng=None, frozen=None):
        w = np.asarray(windows, dtype=np.float64)
        single = w.ndim == 2
        if single:
            w = w[None]
        if w.shape[1:] != (self.lookback, self.n_features):
            raise ShapeError("window", w.shape[1:], (self.lookback, self.n_features))
        mask = None
        if train:
            shape = (w.shape[0], 1, self.n_features)
            mask = frozen["mask"] if frozen is not None else dropout_mask(shape, 1.0 - self.dropout, rng)
        if mask is not None:
            w = w * mask
        cp = self._cell_params(params)
        state = CellState.zeros(self.units, w.shape[0], self.cell)
        outs, _, ctape = run_cell(self.cell, cp, [w[:, t] for t in range(w.shape[1])], state)
        h = outs[-1]
        pred = h @ params["readout.W"] + params["readout.b"]
        tape = {"cell": ctape, "h": h, "mask": mask, "pred": pred}
        return (pred[0] if single else pred), tape

    def backward(self, params, tape, dpred):
        dpred = np.asarray(dpred, dtype=np.float64).reshape(tape["pred"].shape)
        grads = {"readout.W": tape["h"].T @ dpred, "readout.b": dpred.sum(axis=0)}
        dh = dpred @ params["readout.W"].T
        steps = len(tape["cell"].caches)
        cg, _, _ = cell_backward(tape["cell"], [None] * (steps - 1) + [dh])
        grads.update({f"cell.{k}": v for k, v in cg.items()})
        return grads

    def decisions(self, tape):
        return {"mask": tape["mask"]}

    def describe(self) -> dict:
        return {"kind": self.kind, "units": self.units, "n_features": self.n_features,
                "lookback": self.lookback, "horizon": self.horizon, "dropout": self.dropout}


def frozen_decisions(model, tape):
    """Discrete choices of a training-mode pass, for replay under perturbation."""
    if isinstance(model, AlphaTRim):
        return tape.decisions()
    return model.decisions(tape)


def build_model(kind: str, hyper: dict, n_features: int, lookback: int, horizon: int = HORIZON):
    """Instantiate a model from a hyperparameter dict (see ``search``)."""
    if kind == "alpha_t_rim":
        cfg = RimConfig(
            units=hyper["units"],
            num_modules_total=hyper["k_modules"],
            num_modules_active=hyper["num_rims"],
            input_key_size=hyper["input_key_size"],
            input_value_size=hyper["input_value_size"],
            input_query_size=hyper["input_query_size"],
            input_heads=hyper.get("input_heads", 1),
            input_keep_prob=hyper["input_keep_prob"],
            comm_heads=hyper["comm_heads"],
            comm_key_size=hyper["comm_key_size"],
            comm_value_size=hyper["comm_value_size"],
            comm_query_size=hyper["comm_query_size"],
            comm_keep_prob=hyper["comm_keep_prob"],
            lookback=lookback,
            horizon=horizon,
            n_features=n_features,
            include_self_in_comm=hyper.get("include_self_in_comm", True),
            feature_tags=hyper.get("feature_tags", True),
        )
        return AlphaTRim(cfg)
    return SequenceModel(kind, n_features, hyper["units"], lookback, horizon, hyper.get("dropout", 0.0))


def flatten(params: dict, keys=None) -> np.ndarray:
    keys = list(params) if keys is None else keys
    return np.concatenate([np.asarray(params[k], dtype=np.float64).ravel() for k in keys])


def unflatten(vec, like: dict, keys=None) -> dict:
    keys = list(like) if keys is None else keys
    out = dict(like)
    i = 0
    for k in keys:
        shape = np.shape(like[k])
        size = int(np.prod(shape))
        out[k] = np.asarray(vec[i : i + size], dtype=np.float64).reshape(shape)
        i += size
    if i != len(vec):
        raise ShapeError("unflatten", (len(vec),), (i,))
    return out
