"""Analytic-vs-numerical gradient comparison for every model kind."""

from __future__ import annotations

import numpy as np

from .models import SequenceModel, flatten, frozen_decisions, unflatten
from .numeric import finite_diff_grad, make_rng, max_relative_error
from .rim import AlphaTRim, RimConfig
from .training import loss, loss_grad_pred

# gradients smaller than this are compared in absolute terms
REL_FLOOR = 1e-6


def check_model(model, seed: int = 0, batch: int = 3, l1: float = 0.0, jitter: float = 0.1,
                eps: float = 1e-5) -> float:
    """Max relative error between backprop and central differences.

    The forward pass runs in training mode once; its dropout masks and module
    activation sets are then frozen so the loss is a smooth function of the
    parameters.
    """
    rng = make_rng(seed)
    params = model.init_params(rng)
    # move off the symmetric initial point (zero biases etc.)
    params = {k: v + jitter * rng.standard_normal(np.shape(v)) for k, v in params.items()}
    X = rng.standard_normal((batch, model.lookback, model.n_features))
    Y = rng.standard_normal((batch, getattr(model, "horizon", 5) if not isinstance(model, AlphaTRim) else model.cfg.horizon))
    keys = list(params)
    wkeys = model.weight_keys(params)
    pred, tape = model.forward(params, X, train=True, rng=make_rng(seed + 1))
    frozen = frozen_decisions(model, tape)
    grads = model.backward(params, tape, loss_grad_pred(pred, Y))
    for k in wkeys:
        grads[k] = grads[k] + l1 * np.sign(params[k])

    def objective(vec):
        p = unflatten(vec, params, keys)
        out, _ = model.forward(p, X, train=True, rng=None, frozen=frozen)
        return loss(out, Y, p, l1, wkeys)

    numeric = finite_diff_grad(objective, flatten(params, keys), eps)
    return max_relative_error(flatten(grads, keys), numeric, floor=REL_FLOOR)


def default_models() -> dict:
    rim = RimConfig(
        units=2, num_modules_total=2, num_modules_active=1, lookback=4, n_features=2,
        input_key_size=3, input_query_size=3, input_value_size=2, input_heads=2,
        comm_heads=2, comm_key_size=2, comm_query_size=2, comm_value_size=3,
        input_keep_prob=0.8, comm_keep_prob=0.7, strict_lookback=False,
    )
    return {
        "rnn": SequenceModel("rnn", 2, 3, 4, dropout=0.2),
        "lstm": SequenceModel("lstm", 2, 3, 4, dropout=0.2),
        "alpha_rnn": SequenceModel("alpha_rnn", 2, 3, 4, dropout=0.2),
        "alpha_t_rnn": SequenceModel("alpha_t_rnn", 2, 3, 4, dropout=0.2),
        "alpha_t_rim": AlphaTRim(rim),
    }


def check_all(seed: int = 0, l1: float = 1e-3) -> dict:
    return {name: check_model(m, seed=seed, l1=l1) for name, m in default_models().items()}
