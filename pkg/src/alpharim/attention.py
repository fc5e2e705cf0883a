"""Key-value attention used by the modular recurrent network.

Two flavours are provided:

* input attention: module hidden states query the current input objects
  (one 1-D row per scalar feature plus a leading all-zero null row);
* communication attention: active modules query the hidden states of all
  modules and receive a residual update.

Batched tensors use the layout ``(batch, module, ...)``. Heads are split from
the last axis, so a projection of width ``heads * d`` is read as
``(heads, d)``; attention weights are stored head-major,
``(batch, heads, queries, keys)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numeric import ShapeError, as_matrix, glorot_uniform, softmax_rows


@dataclass
class AttentionOutput:
    attended: np.ndarray
    weights: np.ndarray


@dataclass
class AttentionParams:
    """Projection matrices of one attention block.

    ``W_query`` is stacked per module, ``(modules, in_dim, heads * key_size)``;
    ``W_key`` and ``W_value`` are shared across modules. ``W_output`` (only for
    communication) is per module, ``(modules, heads * value_size, units)``.
    """

    W_query: np.ndarray
    W_key: np.ndarray
    W_value: np.ndarray
    heads: int
    W_output: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.heads < 1:
            raise ValueError("head count must be positive")
        qd = self.W_query.shape[-1]
        kd = self.W_key.shape[-1]
        if qd != kd:
            raise ShapeError("query/key width", self.W_query.shape, self.W_key.shape)
        if kd % self.heads or self.W_value.shape[-1] % self.heads:
            raise ShapeError(f"key/value width not divisible by {self.heads} heads", self.W_key.shape, self.W_value.shape)

    @property
    def key_size(self) -> int:
        return self.W_key.shape[-1] // self.heads

    @property
    def value_size(self) -> int:
        return self.W_value.shape[-1] // self.heads


def init_attention_params(
    modules: int, query_in: int, kv_in: int, heads: int, key_size: int, value_size: int,
    rng: np.random.Generator, out_units: Optional[int] = None,
) -> AttentionParams:
    wq = np.stack([glorot_uniform(query_in, heads * key_size, rng) for _ in range(modules)])
    wk = glorot_uniform(kv_in, heads * key_size, rng)
    wv = glorot_uniform(kv_in, heads * value_size, rng)
    wo = None
    if out_units is not None:
        wo = np.stack([glorot_uniform(heads * value_size, out_units, rng) for _ in range(modules)])
    return AttentionParams(wq, wk, wv, heads, wo)


def scaled_attention(Q, K, V) -> AttentionOutput:
    """``softmax(Q K^T / sqrt(d)) V`` on plain matrices."""
    Q, K, V = as_matrix(Q), as_matrix(K), as_matrix(V)
    if Q.shape[1] != K.shape[1]:
        raise ShapeError("scaled_attention query/key", Q.shape, K.shape)
    if K.shape[0] != V.shape[0]:
        raise ShapeError("scaled_attention key/value", K.shape, V.shape)
    w = softmax_rows(Q @ K.T / np.sqrt(Q.shape[1]))
    return AttentionOutput(attended=w @ V, weights=w)


def build_input_objects(x, tagged: bool = False) -> np.ndarray:
    """Input objects for one step: zero null row followed by one row per feature.

    ``x`` of shape ``(F,)`` gives ``(F + 1, 1)``; a batch ``(B, F)`` gives
    ``(B, F + 1, 1)``. With ``tagged`` every feature row also carries a
    one-hot channel indicator, giving rows of width ``1 + F``; the null row
    stays all zero either way.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 1:
        raise ShapeError("build_input_objects", x.shape)
    null = np.zeros(x.shape[:-1] + (1,))
    rows = np.concatenate([null, x], axis=-1)[..., None]
    if not tagged:
        return rows
    F = x.shape[-1]
    tags = np.concatenate([np.zeros((1, F)), np.eye(F)])
    tags = np.broadcast_to(tags, x.shape[:-1] + tags.shape)
    return np.concatenate([rows, tags], axis=-1)


def mod_mm(a, W):
    """Per-module product: ``(B, M, i) x (M, i, o) -> (B, M, o)``."""
    return np.matmul(a.transpose(1, 0, 2), W).transpose(1, 0, 2)


def mod_mm_t(d, W):
    """Per-module product with ``W`` transposed: ``(B, M, o) x (M, i, o) -> (B, M, i)``."""
    return np.matmul(d.transpose(1, 0, 2), W.transpose(0, 2, 1)).transpose(1, 0, 2)


def mod_outer(a, d):
    """Batch-summed per-module outer products: ``(B, M, i), (B, M, o) -> (M, i, o)``."""
    return np.matmul(a.transpose(1, 2, 0), d.transpose(1, 0, 2))


def _flat_outer(a, d):
    return a.reshape(-1, a.shape[-1]).T @ d.reshape(-1, d.shape[-1])


def _split_heads(a, heads):
    """``(B, N, heads * d) -> (B, heads, N, d)``."""
    B, N, _ = a.shape
    return a.reshape(B, N, heads, -1).transpose(0, 2, 1, 3)


def _merge_heads(a):
    """``(B, heads, N, d) -> (B, N, heads * d)``."""
    B, H, N, d = a.shape
    return a.transpose(0, 2, 1, 3).reshape(B, N, H * d)


def _mh_forward(Q, K, V, logit_mask=None):
    """Multi-head attention on head-major ``(B, H, N, d)`` tensors."""
    d = Q.shape[-1]
    scores = np.matmul(Q, K.transpose(0, 1, 3, 2)) / np.sqrt(d)
    if logit_mask is not None:
        scores = np.where(logit_mask, scores, -np.inf)
    w = softmax_rows(scores, axis=-1)
    return np.matmul(w, V), w


def _mh_backward(Q, K, V, w, dout):
    d = Q.shape[-1]
    dw = np.matmul(dout, V.transpose(0, 1, 3, 2))
    dV = np.matmul(w.transpose(0, 1, 3, 2), dout)
    ds = w * (dw - np.sum(dw * w, axis=-1, keepdims=True)) / np.sqrt(d)
    dQ = np.matmul(ds, K)
    dK = np.matmul(ds.transpose(0, 1, 3, 2), Q)
    return dQ, dK, dV


def dropout_mask(shape, keep_prob: float, rng: Optional[np.random.Generator]) -> Optional[np.ndarray]:
    """Inverted-dropout mask (kept entries scaled by ``1/keep_prob``), or None."""
    if keep_prob >= 1.0:
        return None
    if not 0.0 < keep_prob:
        raise ValueError("keep probability must lie in (0, 1]")
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    return (rng.random(shape) < keep_prob) / keep_prob


def input_attention(
    h, X, p: AttentionParams, rng=None, keep_prob: float = 1.0, train: bool = False, mask=None,
):
    """Attend from every module's state to the input objects.

    Returns ``(attended, null_weight, cache)``. ``attended`` has the heads
    concatenated (``heads * value_size`` columns per module); ``null_weight``
    is the softmax mass on the null row averaged over heads. In training mode
    inverted dropout is applied to ``attended``; pass ``mask`` to reuse a
    recorded dropout mask.
    """
    h = np.asarray(h, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    single = h.ndim == 2
    if single:
        h, X = h[None], X[None]
    B, M, n = h.shape
    if p.W_query.shape[:2] != (M, n):
        raise ShapeError("input_attention query weights", p.W_query.shape, h.shape)
    if X.shape[0] != B or X.shape[-1] != p.W_key.shape[0]:
        raise ShapeError("input_attention objects", X.shape, p.W_key.shape)
    H = p.heads
    Q = _split_heads(mod_mm(h, p.W_query), H)
    K = _split_heads(X @ p.W_key, H)
    V = _split_heads(X @ p.W_value, H)
    out, w = _mh_forward(Q, K, V)
    attended = _merge_heads(out)
    null_weight = w[..., 0].mean(axis=1)
    if train and mask is None:
        mask = dropout_mask(attended.shape, keep_prob, rng)
    if train and mask is not None:
        attended = attended * mask
    else:
        mask = None
    cache = dict(h=h, X=X, Q=Q, K=K, V=V, w=w, mask=mask, p=p)
    if single:
        return attended[0], null_weight[0], cache
    return attended, null_weight, cache


def input_attention_backward(cache, d_attended):
    """Gradients w.r.t. the projections and the querying hidden states."""
    p = cache["p"]
    h, X, Q, K, V, w = (cache[k] for k in ("h", "X", "Q", "K", "V", "w"))
    d_att = np.asarray(d_attended, dtype=np.float64).reshape(h.shape[0], h.shape[1], -1)
    if cache["mask"] is not None:
        d_att = d_att * cache["mask"]
    dQ, dK, dV = (_merge_heads(g) for g in _mh_backward(Q, K, V, w, _split_heads(d_att, p.heads)))
    grads = {
        "W_query": mod_outer(h, dQ),
        "W_key": _flat_outer(X, dK),
        "W_value": _flat_outer(X, dV),
    }
    dh = mod_mm_t(dQ, p.W_query)
    return grads, dh


def _active_mask(active, B, M):
    if active is None:
        return np.ones((B, M), dtype=bool)
    a = np.asarray(active)
    if a.dtype == bool:
        return np.broadcast_to(a.reshape((-1, M)), (B, M))
    m = np.zeros((B, M), dtype=bool)
    m[:, list(a.ravel())] = True
    return m


def communication_attention(
    h_all, active, p: AttentionParams, rng=None, keep_prob: float = 1.0, train: bool = False,
    include_self: bool = True, mask=None,
):
    """Residual deltas for the active modules.

    ``active`` is either an iterable of module indices (applied to every batch
    row) or a boolean ``(B, M)`` array. Queries come from each module's state,
    keys and values from all modules' states. Rows of inactive modules are
    exactly zero. Returns ``(delta, cache)``.
    """
    h = np.asarray(h_all, dtype=np.float64)
    single = h.ndim == 2
    if single:
        h = h[None]
    B, M, n = h.shape
    act = _active_mask(active, B, M)
    if p.W_output is None:
        raise ValueError("communication attention needs an output projection")
    H = p.heads
    Q = _split_heads(mod_mm(h, p.W_query), H)
    K = _split_heads(h @ p.W_key, H)
    V = _split_heads(h @ p.W_value, H)
    logit_mask = None
    if not include_self:
        if M < 2:
            raise ValueError("excluding self-attention needs at least two modules")
        logit_mask = ~np.eye(M, dtype=bool)
    out, w = _mh_forward(Q, K, V, logit_mask)
    out = _merge_heads(out)
    if train and mask is None:
        mask = dropout_mask(out.shape, keep_prob, rng)
    if not train:
        mask = None
    out_d = out * mask if mask is not None else out
    delta = mod_mm(out_d, p.W_output)
    delta = np.where(act[..., None], delta, 0.0)
    cache = dict(h=h, Q=Q, K=K, V=V, w=w, mask=mask, out_d=out_d, act=act, p=p)
    if single:
        return delta[0], cache
    return delta, cache


def communication_attention_backward(cache, d_delta):
    p = cache["p"]
    h, Q, K, V, w, act = (cache[k] for k in ("h", "Q", "K", "V", "w", "act"))
    dd = np.asarray(d_delta, dtype=np.float64).reshape(h.shape) * act[..., None]
    grads = {"W_output": mod_outer(cache["out_d"], dd)}
    dout = mod_mm_t(dd, p.W_output)
    if cache["mask"] is not None:
        dout = dout * cache["mask"]
    dQ, dK, dV = (_merge_heads(g) for g in _mh_backward(Q, K, V, w, _split_heads(dout, p.heads)))
    grads["W_query"] = mod_outer(h, dQ)
    grads["W_key"] = _flat_outer(h, dK)
    grads["W_value"] = _flat_outer(h, dV)
    dh = mod_mm_t(dQ, p.W_query) + dK @ p.W_key.T + dV @ p.W_value.T
    return grads, dh
