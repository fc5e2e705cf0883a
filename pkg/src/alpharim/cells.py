"""Recurrent cells: simple RNN, LSTM, static-alpha RNN and alpha_t RNN.

Every step function works on a single vector ``x`` of shape ``(d,)`` or on a
batch of shape ``(B, d)``. Parameters are dicts of float64 arrays; weight
matrices map row vectors, i.e. ``x @ W_in`` with ``W_in`` of shape ``(d, n)``.

The smoothed cells follow

    h_hat   = tanh(x @ W_in + h_smooth @ U_rec + b)
    h_smooth' = alpha * h_hat + (1 - alpha) * h_smooth

with ``alpha`` fixed (static cell) or produced every step by a one-unit
recurrent subnet squashed through the logistic function (alpha_t cell).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .numeric import ShapeError, glorot_uniform, orthogonal_init, sigmoid

CELL_KINDS = ("rnn", "lstm", "alpha", "alpha_t")


@dataclass
class CellState:
    h_smooth: np.ndarray
    h_hat_last: Optional[np.ndarray] = None
    alpha_mem: Optional[np.ndarray] = None
    c: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, units: int, batch: Optional[int] = None, kind: str = "alpha_t") -> "CellState":
        shape = (units,) if batch is None else (batch, units)
        mem_shape = () if batch is None else (batch,)
        return cls(
            h_smooth=np.zeros(shape),
            alpha_mem=np.zeros(mem_shape) if kind == "alpha_t" else None,
            c=np.zeros(shape) if kind == "lstm" else None,
        )


def init_cell_params(kind: str, n_in: int, units: int, rng: np.random.Generator, alpha: float = 0.5) -> dict:
    """Glorot-uniform input weights, orthogonal recurrence, zero biases."""
    if kind not in CELL_KINDS:
        raise ValueError(f"unknown cell kind {kind!r}")
    if kind == "lstm":
        W = np.concatenate([glorot_uniform(n_in, units, rng) for _ in range(4)], axis=1)
        U = np.concatenate([orthogonal_init(units, rng) for _ in range(4)], axis=1)
        b = np.zeros(4 * units)
        b[units : 2 * units] = 1.0  # forget gate
        return {"W_in": W, "U_rec": U, "b": b}
    p = {
        "W_in": glorot_uniform(n_in, units, rng),
        "U_rec": orthogonal_init(units, rng),
        "b": np.zeros(units),
    }
    if kind == "alpha":
        p["alpha"] = np.array(float(alpha))
    elif kind == "alpha_t":
        p["w_alpha_in"] = glorot_uniform(n_in, 1, rng)[:, 0]
        p["u_alpha"] = np.array(orthogonal_init(1, rng)[0, 0])
        p["b_alpha"] = np.array(0.0)
    return p


def weight_keys(kind: str) -> tuple[str, ...]:
    """Names of the entries counted by L1 regularisation (biases excluded)."""
    if kind == "alpha_t":
        return ("W_in", "U_rec", "w_alpha_in", "u_alpha")
    return ("W_in", "U_rec")


def _check(x, h, p, gates=1):
    W, U = p["W_in"], p["U_rec"]
    n = U.shape[0]
    if U.shape != (n, gates * n):
        raise ShapeError("recurrence matrix", U.shape, (n, gates * n))
    if W.shape != (x.shape[-1], gates * n):
        raise ShapeError("input weights", W.shape, (x.shape[-1], gates * n))
    if h.shape[-1] != n or h.shape[:-1] != x.shape[:-1]:
        raise ShapeError("state", h.shape, x.shape)


def _col(a):
    # scalar-per-row quantities broadcast against (..., n)
    return np.asarray(a)[..., None]


def rnn_step(state: CellState, x, p: dict):
    x = np.asarray(x, dtype=np.float64)
    h_prev = state.h_smooth
    _check(x, h_prev, p)
    h = np.tanh(x @ p["W_in"] + h_prev @ p["U_rec"] + p["b"])
    cache = ("rnn", x, h_prev, h)
    return CellState(h_smooth=h, h_hat_last=h), h, cache


def lstm_step(state: CellState, x, p: dict):
    x = np.asarray(x, dtype=np.float64)
    h_prev, c_prev = state.h_smooth, state.c
    _check(x, h_prev, p, gates=4)
    n = h_prev.shape[-1]
    a = x @ p["W_in"] + h_prev @ p["U_rec"] + p["b"]
    i = sigmoid(a[..., :n])
    f = sigmoid(a[..., n : 2 * n])
    o = sigmoid(a[..., 2 * n : 3 * n])
    g = np.tanh(a[..., 3 * n :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    cache = ("lstm", x, h_prev, c_prev, i, f, o, g, tc)
    return CellState(h_smooth=h, h_hat_last=h, c=c), h, cache


def _smooth_step(x, h_prev, p, alpha):
    h_hat = np.tanh(x @ p["W_in"] + h_prev @ p["U_rec"] + p["b"])
    a = _col(alpha)
    h = a * h_hat + (1.0 - a) * h_prev
    return h_hat, h


def alpha_static_step(state: CellState, x, p: dict):
    x = np.asarray(x, dtype=np.float64)
    alpha = float(p["alpha"])
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"static smoothing parameter must lie in (0, 1], got {alpha}")
    h_prev = state.h_smooth
    _check(x, h_prev, p)
    h_hat, h = _smooth_step(x, h_prev, p, alpha)
    cache = ("alpha", x, h_prev, h_hat, alpha)
    return CellState(h_smooth=h, h_hat_last=h_hat), h, cache


def alpha_gate(x, mem, p):
    """Pre-squash alpha subnet value ``z``; ``alpha = sigmoid(z)``."""
    return x @ p["w_alpha_in"] + p["u_alpha"] * mem + p["b_alpha"]


def alpha_t_step(state: CellState, x, p: dict):
    x = np.asarray(x, dtype=np.float64)
    h_prev = state.h_smooth
    _check(x, h_prev, p)
    mem = state.alpha_mem if state.alpha_mem is not None else np.zeros(x.shape[:-1])
    z = alpha_gate(x, mem, p)
    alpha = sigmoid(z)
    h_hat, h = _smooth_step(x, h_prev, p, alpha)
    cache = ("alpha_t", x, h_prev, h_hat, mem, alpha)
    return CellState(h_smooth=h, h_hat_last=h_hat, alpha_mem=z), h, cache


STEPS = {
    "rnn": rnn_step,
    "lstm": lstm_step,
    "alpha": alpha_static_step,
    "alpha_t": alpha_t_step,
}


def alpha_unrolled(h_hat_seq, alpha_seq, h_init) -> np.ndarray:
    """Closed-form smoothed state after ``t`` steps as a lag-weighted sum.

    ``h_hat_seq[i]`` and ``alpha_seq[i]`` belong to step ``i + 1``. The
    result equals iterating the convex smoothing recursion from ``h_init``.
    """
    coeffs, init_coeff = unrolled_weights(alpha_seq)
    if len(h_hat_seq) != len(coeffs):
        raise ValueError(f"length mismatch: {len(h_hat_seq)} states vs {len(coeffs)} alphas")
    out = init_coeff * np.asarray(h_init, dtype=np.float64)
    for c, hh in zip(coeffs, h_hat_seq):
        out = out + c * np.asarray(hh, dtype=np.float64)
    return out


def unrolled_weights(alpha_seq) -> tuple[np.ndarray, float]:
    """Per-step weights of the unrolled smoother and the initial-state weight.

    Weight of the state from ``s`` steps back is
    ``alpha_{t-s} * prod_{r=1..s} (1 - alpha_{t-r+1})``; the initial state
    gets ``prod_{r=0..t-1} (1 - alpha_{t-r})``.
    """
    a = np.asarray(alpha_seq, dtype=np.float64).ravel()
    t = a.size
    if t < 1:
        raise ValueError("need at least one step")
    coeffs = np.empty(t)
    coeffs[t - 1] = a[t - 1]
    for s in range(1, t):
        prod = 1.0
        for r in range(1, s + 1):
            prod *= 1.0 - a[t - r]
        coeffs[t - 1 - s] = a[t - 1 - s] * prod
    init = 1.0
    for r in range(t):
        init *= 1.0 - a[t - 1 - r]
    return coeffs, init


@dataclass
class CellTape:
    kind: str
    params: dict
    caches: list = field(default_factory=list)


def run_cell(kind: str, p: dict, xs, state: Optional[CellState] = None):
    """Unroll a cell over ``xs`` (time-major). Returns outputs, final state, tape."""
    step = STEPS[kind]
    xs = [np.asarray(x, dtype=np.float64) for x in xs]
    if state is None:
        units = p["U_rec"].shape[0]
        batch = xs[0].shape[0] if xs[0].ndim == 2 else None
        state = CellState.zeros(units, batch, kind)
    tape = CellTape(kind, p)
    outs = []
    for x in xs:
        state, h, cache = step(state, x, p)
        tape.caches.append(cache)
        outs.append(h)
    return outs, state, tape


def _sum_rows(a):
    return a.reshape(-1, a.shape[-1]).sum(axis=0) if a.ndim > 1 else a


def _outer(x, d):
    # sum over batch of x^T d, valid for vectors too
    return x.reshape(-1, x.shape[-1]).T @ d.reshape(-1, d.shape[-1])


def cell_backward(tape: CellTape, dh_seq, dstate: Optional[dict] = None):
    """Reverse-mode gradients of an unrolled cell.

    ``dh_seq[t]`` is the loss gradient w.r.t. the output at step ``t`` (or
    ``None``). ``dstate`` optionally seeds gradients w.r.t. the final state
    (keys ``h``, ``c``, ``alpha_mem``). Returns ``(param_grads, dxs, dstate0)``
    where ``dstate0`` holds gradients w.r.t. the initial state.
    """
    p = tape.params
    if len(dh_seq) != len(tape.caches):
        raise ValueError(f"tape has {len(tape.caches)} steps, got {len(dh_seq)} upstream gradients")
    grads = {k: np.zeros_like(np.asarray(v, dtype=np.float64)) for k, v in p.items()}
    dstate = dict(dstate or {})
    first = tape.caches[0]
    x0, h0 = first[1], first[2]
    dh = np.zeros_like(h0) + dstate.get("h", 0.0)
    dc = np.zeros_like(h0) + dstate.get("c", 0.0)
    dmem = np.zeros(x0.shape[:-1]) + dstate.get("alpha_mem", 0.0)
    dxs = [None] * len(tape.caches)
    for t in reversed(range(len(tape.caches))):
        cache = tape.caches[t]
        if dh_seq[t] is not None:
            dh = dh + dh_seq[t]
        kind = cache[0]
        if kind == "rnn":
            _, x, h_prev, h = cache
            da = dh * (1.0 - h * h)
            grads["W_in"] += _outer(x, da)
            grads["U_rec"] += _outer(h_prev, da)
            grads["b"] += _sum_rows(da)
            dxs[t] = da @ p["W_in"].T
            dh = da @ p["U_rec"].T
        elif kind == "lstm":
            _, x, h_prev, c_prev, i, f, o, g, tc = cache
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dc = dc * f
            da = np.concatenate(
                [di * i * (1 - i), df * f * (1 - f), do * o * (1 - o), dg * (1 - g * g)], axis=-1
            )
            grads["W_in"] += _outer(x, da)
            grads["U_rec"] += _outer(h_prev, da)
            grads["b"] += _sum_rows(da)
            dxs[t] = da @ p["W_in"].T
            dh = da @ p["U_rec"].T
        else:
            if kind == "alpha":
                _, x, h_prev, h_hat, alpha = cache
            else:
                _, x, h_prev, h_hat, mem, alpha = cache
            a = _col(alpha)
            dalpha = np.sum(dh * (h_hat - h_prev), axis=-1)
            dpre = (a * dh) * (1.0 - h_hat * h_hat)
            grads["W_in"] += _outer(x, dpre)
            grads["U_rec"] += _outer(h_prev, dpre)
            grads["b"] += _sum_rows(dpre)
            dx = dpre @ p["W_in"].T
            dh = (1.0 - a) * dh + dpre @ p["U_rec"].T
            if kind == "alpha":
                grads["alpha"] += np.sum(dalpha)
            else:
                dz = dalpha * alpha * (1.0 - alpha) + dmem
                grads["w_alpha_in"] += _outer(x, _col(dz))[:, 0]
                grads["u_alpha"] += np.sum(dz * mem)
                grads["b_alpha"] += np.sum(dz)
                dx = dx + _col(dz) * p["w_alpha_in"]
                dmem = dz * p["u_alpha"]
            dxs[t] = dx
    dstate0 = {"h": dh}
    if tape.kind == "lstm":
        dstate0["c"] = dc
    if tape.kind == "alpha_t":
        dstate0["alpha_mem"] = dmem
    return grads, dxs, dstate0
