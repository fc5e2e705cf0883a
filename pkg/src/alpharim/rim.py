"""Sparsely activated modular recurrent network with alpha_t-smoothed modules.

Each step:

1. every module queries the input objects (null row + one row per feature);
   the ``num_modules_active`` modules putting the least attention mass on the
   null row are activated;
2. active modules run one alpha_t-RNN transition on their attended input,
   inactive modules keep their state untouched;
3. active modules read from all module states through communication
   attention and add the result to their state.

The forecast is an affine readout of the concatenated final states of all
modules. Gradients are exact for the recorded computation; the discrete
module selection and dropout masks are treated as constants.

Parameters live in a flat dict. Arrays whose name starts with ``module.`` are
stacked along a leading module axis (``module.cell.W_in`` has shape
``(modules, cell_input, units)``).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .attention import (
    AttentionParams,
    build_input_objects,
    communication_attention,
    communication_attention_backward,
    init_attention_params,
    input_attention,
    input_attention_backward,
    mod_mm,
    mod_mm_t,
    mod_outer,
)
from .cells import CellState
from .numeric import ShapeError, glorot_uniform, orthogonal_init, sigmoid

LOOKBACKS = (5, 10, 21)
HORIZON = 5


@dataclass(frozen=True)
class RimConfig:
    units: int = 10
    num_modules_total: int = 4
    num_modules_active: int = 2
    input_key_size: int = 4
    input_value_size: int = 4
    input_query_size: int = 4
    input_heads: int = 1
    input_keep_prob: float = 0.9
    comm_heads: int = 2
    comm_key_size: int = 4
    comm_value_size: int = 4
    comm_query_size: int = 4
    comm_keep_prob: float = 0.9
    lookback: int = 10
    horizon: int = HORIZON
    n_features: int = 2
    include_self_in_comm: bool = True
    feature_tags: bool = True
    strict_lookback: bool = field(default=True, compare=False)

    def __post_init__(self):
        for name in (
            "units", "num_modules_total", "num_modules_active", "input_key_size",
            "input_value_size", "input_query_size", "input_heads", "comm_heads",
            "comm_key_size", "comm_value_size", "comm_query_size", "lookback", "horizon",
        ):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.num_modules_active > self.num_modules_total:
            raise ValueError(
                f"num_modules_active ({self.num_modules_active}) exceeds "
                f"num_modules_total ({self.num_modules_total})"
            )
        # dot-product attention compares queries with keys entry by entry
        if self.input_query_size != self.input_key_size:
            raise ValueError("input_query_size must equal input_key_size")
        if self.comm_query_size != self.comm_key_size:
            raise ValueError("comm_query_size must equal comm_key_size")
        for name in ("input_keep_prob", "comm_keep_prob"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if self.strict_lookback and self.lookback not in LOOKBACKS:
            raise ValueError(f"lookback must be one of {LOOKBACKS}, got {self.lookback}")
        if self.n_features not in (1, 2):
            raise ValueError("n_features must be 1 (univariate) or 2 (bivariate)")
        if not self.include_self_in_comm and self.num_modules_total < 2:
            raise ValueError("excluding self-communication needs at least two modules")

    @property
    def object_width(self) -> int:
        return 1 + self.n_features if self.feature_tags else 1

    @property
    def cell_input(self) -> int:
        return self.input_heads * self.input_value_size

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("strict_lookback")
        return d


@dataclass
class RimState:
    h: np.ndarray  # (B, modules, units)
    alpha_mem: np.ndarray  # (B, modules)
    step: int = 0

    @classmethod
    def zeros(cls, cfg: RimConfig, batch: int) -> "RimState":
        return cls(
            np.zeros((batch, cfg.num_modules_total, cfg.units)),
            np.zeros((batch, cfg.num_modules_total)),
        )

    def cell_state(self, k: int, row: int = 0) -> CellState:
        return CellState(h_smooth=self.h[row, k], alpha_mem=self.alpha_mem[row, k])


def init_rim_params(cfg: RimConfig, rng: np.random.Generator) -> dict:
    K, n, d_in = cfg.num_modules_total, cfg.units, cfg.cell_input
    p: dict[str, np.ndarray] = {}
    ia = init_attention_params(K, n, cfg.object_width, cfg.input_heads, cfg.input_key_size, cfg.input_value_size, rng)
    p["module.in_att.W_query"] = ia.W_query
    p["in_att.W_key"] = ia.W_key
    p["in_att.W_value"] = ia.W_value
    p["module.cell.W_in"] = np.stack([glorot_uniform(d_in, n, rng) for _ in range(K)])
    p["module.cell.U_rec"] = np.stack([orthogonal_init(n, rng) for _ in range(K)])
    p["module.cell.b"] = np.zeros((K, n))
    p["module.cell.w_alpha_in"] = np.stack([glorot_uniform(d_in, 1, rng)[:, 0] for _ in range(K)])
    p["module.cell.u_alpha"] = np.array([orthogonal_init(1, rng)[0, 0] for _ in range(K)])
    p["module.cell.b_alpha"] = np.zeros(K)
    ca = init_attention_params(K, n, n, cfg.comm_heads, cfg.comm_key_size, cfg.comm_value_size, rng, out_units=n)
    p["module.comm.W_query"] = ca.W_query
    p["comm.W_key"] = ca.W_key
    p["comm.W_value"] = ca.W_value
    p["module.comm.W_output"] = ca.W_output
    p["readout.W"] = glorot_uniform(K * n, cfg.horizon, rng)
    p["readout.b"] = np.zeros(cfg.horizon)
    return p


def rim_param_shapes(cfg: RimConfig) -> dict:
    K, n, d = cfg.num_modules_total, cfg.units, cfg.cell_input
    ik = cfg.input_heads * cfg.input_key_size
    ck, cv = cfg.comm_heads * cfg.comm_key_size, cfg.comm_heads * cfg.comm_value_size
    return {
        "module.in_att.W_query": (K, n, ik),
        "in_att.W_key": (cfg.object_width, ik),
        "in_att.W_value": (cfg.object_width, d),
        "module.cell.W_in": (K, d, n),
        "module.cell.U_rec": (K, n, n),
        "module.cell.b": (K, n),
        "module.cell.w_alpha_in": (K, d),
        "module.cell.u_alpha": (K,),
        "module.cell.b_alpha": (K,),
        "module.comm.W_query": (K, n, ck),
        "comm.W_key": (n, ck),
        "comm.W_value": (n, cv),
        "module.comm.W_output": (K, cv, n),
        "readout.W": (K * n, cfg.horizon),
        "readout.b": (cfg.horizon,),
    }


RIM_BIAS_KEYS = ("module.cell.b", "module.cell.b_alpha", "readout.b")


def _in_params(p, cfg):
    return AttentionParams(p["module.in_att.W_query"], p["in_att.W_key"], p["in_att.W_value"], cfg.input_heads)


def _comm_params(p, cfg):
    return AttentionParams(
        p["module.comm.W_query"], p["comm.W_key"], p["comm.W_value"], cfg.comm_heads, p["module.comm.W_output"]
    )


def select_active(null_weights, n_active: int):
    """Modules with the smallest null-row attention mass.

    A 1-D input returns the chosen indices as a sorted tuple; a ``(B, M)``
    input returns a boolean activation mask. Ties go to the lower index.
    """
    w = np.asarray(null_weights, dtype=np.float64)
    M = w.shape[-1]
    if not 0 <= n_active <= M:
        raise ValueError(f"cannot activate {n_active} of {M} modules")
    order = np.argsort(w, axis=-1, kind="stable")[..., :n_active]
    if w.ndim == 1:
        return tuple(sorted(int(i) for i in order))
    mask = np.zeros(w.shape, dtype=bool)
    np.put_along_axis(mask, order, True, axis=-1)
    return mask


@dataclass
class StepRecord:
    """Everything one step needs for backward, plus its discrete decisions."""

    h_prev: np.ndarray
    mem_prev: np.ndarray
    u: np.ndarray
    z: np.ndarray
    alpha: np.ndarray
    h_hat: np.ndarray
    active: np.ndarray
    null_weight: np.ndarray
    in_cache: dict
    comm_cache: dict

    @property
    def in_mask(self):
        return self.in_cache["mask"]

    @property
    def comm_mask(self):
        return self.comm_cache["mask"]


def rim_step(
    state: RimState, x, p: dict, cfg: RimConfig, train: bool = False, rng=None, frozen: Optional[dict] = None,
):
    """Advance every module by one time step. Returns ``(new_state, record)``.

    ``x`` is ``(B, n_features)``. ``frozen`` may carry ``active``,
    ``in_mask`` and ``comm_mask`` recorded from an earlier pass.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None]
    h, mem = state.h, state.alpha_mem
    if x.shape != (h.shape[0], cfg.n_features):
        raise ShapeError("rim_step input", x.shape, (h.shape[0], cfg.n_features))
    frozen = frozen or {}
    X = build_input_objects(x, cfg.feature_tags)
    u, null_w, in_cache = input_attention(
        h, X, _in_params(p, cfg), rng, cfg.input_keep_prob, train, mask=frozen.get("in_mask")
    )
    active = frozen.get("active")
    if active is None:
        active = select_active(null_w, cfg.num_modules_active)
    act = active[..., None]

    z = np.sum(u * p["module.cell.w_alpha_in"], axis=-1) + p["module.cell.u_alpha"] * mem + p["module.cell.b_alpha"]
    alpha = sigmoid(z)
    pre = mod_mm(u, p["module.cell.W_in"]) + mod_mm(h, p["module.cell.U_rec"]) + p["module.cell.b"]
    h_hat = np.tanh(pre)
    a = alpha[..., None]
    h_mid = np.where(act, a * h_hat + (1.0 - a) * h, h)
    mem_new = np.where(active, z, mem)

    delta, comm_cache = communication_attention(
        h_mid, active, _comm_params(p, cfg), rng, cfg.comm_keep_prob, train,
        cfg.include_self_in_comm, mask=frozen.get("comm_mask"),
    )
    h_new = np.where(act, h_mid + delta, h_mid)
    rec = StepRecord(h, mem, u, z, alpha, h_hat, active, null_w, in_cache, comm_cache)
    return RimState(h_new, mem_new, state.step + 1), rec


def _step_backward(rec: StepRecord, p: dict, dh, dmem, grads: dict):
    act = rec.active
    A = act[..., None]
    g_comm, dh_comm = communication_attention_backward(rec.comm_cache, dh)
    grads["module.comm.W_query"] += g_comm["W_query"]
    grads["comm.W_key"] += g_comm["W_key"]
    grads["comm.W_value"] += g_comm["W_value"]
    grads["module.comm.W_output"] += g_comm["W_output"]
    dh_mid = dh + dh_comm

    dh_c = np.where(A, dh_mid, 0.0)
    dh_prev = np.where(A, 0.0, dh_mid)
    dz = np.where(act, dmem, 0.0)
    dmem_prev = np.where(act, 0.0, dmem)

    h, u, h_hat, alpha = rec.h_prev, rec.u, rec.h_hat, rec.alpha
    a = alpha[..., None]
    dalpha = np.sum(dh_c * (h_hat - h), axis=-1)
    dpre = a * dh_c * (1.0 - h_hat * h_hat)
    grads["module.cell.W_in"] += mod_outer(u, dpre)
    grads["module.cell.U_rec"] += mod_outer(h, dpre)
    grads["module.cell.b"] += dpre.sum(axis=0)
    du = mod_mm_t(dpre, p["module.cell.W_in"])
    dh_prev = dh_prev + (1.0 - a) * dh_c + mod_mm_t(dpre, p["module.cell.U_rec"])

    dz = dz + dalpha * alpha * (1.0 - alpha)
    grads["module.cell.w_alpha_in"] += np.sum(u * dz[..., None], axis=0)
    grads["module.cell.u_alpha"] += np.sum(dz * rec.mem_prev, axis=0)
    grads["module.cell.b_alpha"] += dz.sum(axis=0)
    du = du + dz[..., None] * p["module.cell.w_alpha_in"]
    dmem_prev = dmem_prev + dz * p["module.cell.u_alpha"]

    g_in, dh_in = input_attention_backward(rec.in_cache, du)
    grads["module.in_att.W_query"] += g_in["W_query"]
    grads["in_att.W_key"] += g_in["W_key"]
    grads["in_att.W_value"] += g_in["W_value"]
    return dh_prev + dh_in, dmem_prev


@dataclass
class RimTape:
    records: list
    final_h: np.ndarray
    pred: np.ndarray

    def decisions(self) -> list[dict]:
        """Per-step discrete choices, usable as ``frozen`` in a later pass."""
        return [{"active": r.active, "in_mask": r.in_mask, "comm_mask": r.comm_mask} for r in self.records]

    def active_counts(self) -> np.ndarray:
        return np.array([r.active.sum(axis=-1) for r in self.records])


def forward(windows, p: dict, cfg: RimConfig, train: bool = False, rng=None, frozen: Optional[list] = None):
    """Forecast ``horizon`` steps from ``(B, lookback, n_features)`` windows.

    A single ``(lookback, n_features)`` window yields a 1-D prediction.
    """
    w = np.asarray(windows, dtype=np.float64)
    single = w.ndim == 2
    if single:
        w = w[None]
    if w.shape[1:] != (cfg.lookback, cfg.n_features):
        raise ShapeError("rim forward window", w.shape[1:], (cfg.lookback, cfg.n_features))
    state = RimState.zeros(cfg, w.shape[0])
    records = []
    for t in range(cfg.lookback):
        state, rec = rim_step(state, w[:, t], p, cfg, train, rng, frozen[t] if frozen else None)
        records.append(rec)
    flat = state.h.reshape(w.shape[0], -1)
    pred = flat @ p["readout.W"] + p["readout.b"]
    tape = RimTape(records, state.h, pred)
    return (pred[0] if single else pred), tape


def backward(tape: RimTape, p: dict, dpred) -> dict:
    """Gradients of a loss w.r.t. every parameter given ``dloss/dpred``."""
    dpred = np.asarray(dpred, dtype=np.float64).reshape(tape.pred.shape)
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    B = tape.final_h.shape[0]
    grads["readout.W"] += tape.final_h.reshape(B, -1).T @ dpred
    grads["readout.b"] += dpred.sum(axis=0)
    dh = (dpred @ p["readout.W"].T).reshape(tape.final_h.shape)
    dmem = np.zeros(tape.final_h.shape[:2])
    for rec in reversed(tape.records):
        dh, dmem = _step_backward(rec, p, dh, dmem, grads)
    return grads


class AlphaTRim:
    """alpha_t-RIM forecaster bound to a configuration."""

    kind = "alpha_t_rim"

    def __init__(self, cfg: RimConfig, l1_exempt=RIM_BIAS_KEYS):
        self.cfg = cfg
        self.bias_keys = tuple(l1_exempt)

    @property
    def lookback(self) -> int:
        return self.cfg.lookback

    @property
    def n_features(self) -> int:
        return self.cfg.n_features

    def init_params(self, rng) -> dict:
        return init_rim_params(self.cfg, rng)

    def param_shapes(self) -> dict:
        return rim_param_shapes(self.cfg)

    def weight_keys(self, params) -> list[str]:
        return [k for k in params if k not in self.bias_keys]

    def forward(self, params, windows, train=False, rng=None, frozen=None):
        return forward(windows, params, self.cfg, train, rng, frozen)

    def backward(self, params, tape, dpred):
        return backward(tape, params, dpred)

    def describe(self) -> dict:
        return {"kind": self.kind, **self.cfg.to_dict()}
