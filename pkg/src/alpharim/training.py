"""Loss, Adam, mini-batch training with early stopping, evaluation and
walk-forward cross-validation."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import PreparedData, WindowedDataset, rescale
from .metrics import mae, mape_per_step, mse
from .models import build_model
from .report import ExperimentReport, ModelResult

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, last_finite_epoch: int):
        self.epoch = epoch
        self.last_finite_epoch = last_finite_epoch
        super().__init__(f"non-finite loss at epoch {epoch}; last finite epoch {last_finite_epoch}")


def l1_term(params: dict, keys) -> float:
    return float(sum(np.sum(np.abs(params[k])) for k in keys))


def loss(prediction, target, params: Optional[dict] = None, l1_weight: float = 0.0, weight_keys=None) -> float:
    """Mean squared error plus ``l1_weight`` times the summed absolute weights."""
    p = np.asarray(prediction, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"prediction {p.shape} and target {t.shape} differ")
    value = float(np.mean((p - t) ** 2))
    if l1_weight and params is not None:
        keys = list(params) if weight_keys is None else weight_keys
        value += l1_weight * l1_term(params, keys)
    return value


def loss_grad_pred(prediction, target):
    p = np.asarray(prediction, dtype=np.float64)
    return 2.0 * (p - target) / p.size


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState):
    """One bias-corrected Adam update. Returns ``(new_params, state)``."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    out = {}
    for k, p in params.items():
        g = grads.get(k)
        if g is None:
            out[k] = p
            continue
        if np.shape(g) != np.shape(p):
            raise ValueError(f"gradient for {k} has shape {np.shape(g)}, parameter {np.shape(p)}")
        m = state.m.get(k, np.zeros_like(p))
        v = state.v.get(k, np.zeros_like(p))
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[k], state.v[k] = m, v
        out[k] = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return out, state


def _rngs(seed: int):
    ss = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(3)]


def predict(model, params, inputs, chunk: int = 512) -> np.ndarray:
    outs = [model.forward(params, inputs[i : i + chunk])[0] for i in range(0, len(inputs), chunk)]
    return np.concatenate(outs, axis=0) if outs else np.zeros((0, 5))


def batch_loss_and_grads(model, params, X, Y, l1: float, rng=None, train=True):
    pred, tape = model.forward(params, X, train=train, rng=rng)
    keys = model.weight_keys(params)
    value = loss(pred, Y, params, l1, keys)
    grads = model.backward(params, tape, loss_grad_pred(pred, Y))
    if l1:
        for k in keys:
            grads[k] = grads[k] + l1 * np.sign(params[k])
    return value, grads


@dataclass
class FitResult:
    params: dict
    history: list
    val_history: list
    epochs_run: int
    best_epoch: int


def fit(model, params, train: WindowedDataset, val: Optional[WindowedDataset], epochs: int, seed: int,
        l1: float = 0.0, batch_size: int = 32, lr: float = 1e-3, patience: Optional[int] = 20) -> FitResult:
    """Adam mini-batch training. With a validation set the parameters with the
    lowest validation MSE are returned (early stopping after ``patience``
    epochs without improvement)."""
    _, shuffle_rng, drop_rng = _rngs(seed)
    state = AdamState(lr=lr)
    history, val_history = [], []
    best = (np.inf, params, 0)
    last_finite = 0
    if val is not None and len(val):
        best = (mse(predict(model, params, val.inputs), val.targets), params, 0)
    stale = 0
    n = len(train)
    epoch = 0
    for epoch in range(1, epochs + 1):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for i in range(0, n, batch_size):
            idx = order[i : i + batch_size]
            value, grads = batch_loss_and_grads(model, params, train.inputs[idx], train.targets[idx], l1, drop_rng)
            if not np.isfinite(value):
                raise TrainingDiverged(epoch, last_finite)
            params, state = adam_step(params, grads, state)
            total += value * len(idx)
        history.append(total / n)
        last_finite = epoch
        if val is not None and len(val):
            v = mse(predict(model, params, val.inputs), val.targets)
            if not np.isfinite(v):
                raise TrainingDiverged(epoch, last_finite - 1)
            val_history.append(v)
            if v < best[0]:
                best, stale = (v, params, epoch), 0
            else:
                stale += 1
                if patience is not None and stale >= patience:
                    break
    if val is not None and len(val):
        return FitResult(best[1], history, val_history, epoch if epochs else 0, best[2])
    return FitResult(params, history, val_history, epoch if epochs else 0, epoch if epochs else 0)


def evaluate(model, params, data: PreparedData) -> tuple[dict, dict]:
    """Normalised MSE/MAE per split and re-scaled per-step MAPE for val/test."""
    metrics, mapes = {}, {}
    for name, ds in data.splits().items():
        pred = predict(model, params, ds.inputs)
        metrics[name] = {"mse": mse(pred, ds.targets), "mae": mae(pred, ds.targets)}
        if name != "train":
            p = rescale(pred, data.norm_stats)
            a = rescale(ds.targets, data.norm_stats)
            mapes[name] = [float(v) for v in mape_per_step(p, a)]
    return metrics, mapes


def train(kind: str, data: PreparedData, hyper: dict, epochs: int = 200, seed: int = 0,
          batch_size: int = 32, lr: float = 1e-3, patience: Optional[int] = 20, name: Optional[str] = None):
    """Train one model on ``data`` and report metrics on every split.

    Returns ``(params, ExperimentReport)``. Everything is determined by
    ``(kind, data, hyper, epochs, seed, batch_size, lr, patience)``.
    """
    t0 = time.perf_counter()
    model = build_model(kind, hyper, data.n_features, data.lookback, data.horizon)
    init_rng, _, _ = _rngs(seed)
    params = model.init_params(init_rng)
    fr = fit(model, params, data.train, data.val, epochs, seed, hyper.get("l1", 0.0), batch_size, lr, patience)
    metrics, mapes = evaluate(model, fr.params, data)
    label = name or kind
    result = ModelResult(label, kind, dict(hyper), metrics, mapes, fr.epochs_run,
                         [float(h) for h in fr.history])
    cfg = {label: {"model": model.describe(), "epochs": epochs, "batch_size": batch_size, "lr": lr,
                   "patience": patience, "best_epoch": fr.best_epoch}}
    report = ExperimentReport([result], cfg, seed, data.horizon,
                              {label: round(time.perf_counter() - t0, 3)})
    log.info("%s: test mse %.5f after %d epochs", label, metrics["test"]["mse"], fr.epochs_run)
    return fr.params, report


def expanding_folds(n: int, folds: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Walk-forward splits over ``n`` time-ordered samples.

    The samples are cut into ``folds + 1`` contiguous segments (the oldest one
    absorbs any remainder); fold ``i`` trains on segments ``0..i`` and
    validates on segment ``i + 1``.
    """
    if folds < 2:
        raise ValueError("need at least two folds")
    size = n // (folds + 1)
    if size < 1:
        raise ValueError(f"{n} samples are too few for {folds} folds")
    first = n - size * folds
    bounds = [0, first] + [first + size * i for i in range(1, folds + 1)]
    return [(np.arange(0, bounds[i + 1]), np.arange(bounds[i + 1], bounds[i + 2])) for i in range(folds)]


def ts_cross_validate(kind: str, dataset: WindowedDataset, grid: list, folds: int, epochs: int = 50,
                      seed: int = 0, lookback: Optional[int] = None, horizon: int = 5,
                      batch_size: int = 32, lr: float = 1e-3):
    """Select the grid entry with the lowest mean walk-forward validation MSE.

    Returns ``(best_dict, mean_scores)``; ties go to the earlier grid entry.
    A single-entry grid is returned as is, without training.
    """
    if not grid:
        raise ValueError("empty hyperparameter grid")
    if len(grid) == 1:
        return grid[0], [np.nan]
    splits = expanding_folds(len(dataset), folds)
    lookback = dataset.inputs.shape[1] if lookback is None else lookback
    n_features = dataset.inputs.shape[2]
    scores = []
    for ci, hyper in enumerate(grid):
        fold_scores = []
        for fi, (tr, va) in enumerate(splits):
            model = build_model(kind, hyper, n_features, lookback, horizon)
            init_rng, _, _ = _rngs(seed)
            params = model.init_params(init_rng)
            fr = fit(model, params, dataset.take(tr), None, epochs, seed + fi, hyper.get("l1", 0.0),
                     batch_size, lr, patience=None)
            fold_scores.append(mse(predict(model, fr.params, dataset.inputs[va]), dataset.targets[va]))
        score = float(np.mean(fold_scores))
        scores.append(score if np.isfinite(score) else np.inf)
        log.info("candidate %d/%d: mean validation mse %.5f", ci + 1, len(grid), score)
    best = int(np.argmin(scores))
    return grid[best], scores
