"""Desk-scale comparison on the default synthetic dataset.

For each training seed the alpha_t-RIM is trained on the bivariate
(price + sentiment) and the univariate (price only) data, next to simple-RNN
and LSTM baselines on the bivariate data. All runs share the same dataset;
the seed drives initialisation, shuffling and dropout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT_BASELINE_HYPER, DEFAULT_RIM_HYPER
from .data import SplitSpec, SynthSpec, generate_synthetic, prepare
from .report import ExperimentReport
from .training import train

DESK_EPOCHS = 60
DESK_PATIENCE = 15
DESK_LR = 1e-2


@dataclass
class DeskResult:
    reports: dict = field(default_factory=dict)  # seed -> ExperimentReport

    def test_mse(self, name: str) -> np.ndarray:
        return np.array([r.result(name).metrics["test"]["mse"] for r in self.reports.values()])

    def median_test_mse(self, name: str) -> float:
        return float(np.median(self.test_mse(name)))

    def test_mape(self, name: str) -> np.ndarray:
        return np.array([r.result(name).mape["test"] for r in self.reports.values()])

    def summary(self) -> str:
        names = [r.name for r in next(iter(self.reports.values())).results]
        lines = ["median test MSE over seeds:"]
        lines += [f"  {n:28s} {self.median_test_mse(n):.5f}" for n in names]
        mape = np.median(self.test_mape("alpha_t_rim"), axis=0)
        lines.append("median alpha_t-RIM test MAPE per step: " + " ".join(f"{v:.4f}" for v in mape))
        return "\n".join(lines)


def desk_data(lookback: int = 10, spec: SynthSpec = SynthSpec()):
    raw = generate_synthetic(spec)
    return prepare(raw, SplitSpec.by_fraction(raw.dates), lookback, 5, bivariate=True)


def run_desk_experiment(seeds=range(5), epochs=None, lookback: int = 10, spec: SynthSpec = SynthSpec(),
                        rim_hyper=None, baseline_hyper=None, lstm: bool = True) -> DeskResult:
    epochs = DESK_EPOCHS if epochs is None else epochs
    rim_hyper = dict(DEFAULT_RIM_HYPER, **(rim_hyper or {}))
    base = dict(DEFAULT_BASELINE_HYPER, **(baseline_hyper or {}))
    biv = desk_data(lookback, spec)
    uni = biv.univariate()
    out = DeskResult()
    opts = dict(epochs=epochs, patience=DESK_PATIENCE, lr=DESK_LR)
    for seed in seeds:
        runs = [
            train("alpha_t_rim", biv, rim_hyper, seed=seed, name="alpha_t_rim", **opts)[1],
            train("alpha_t_rim", uni, rim_hyper, seed=seed, name="alpha_t_rim_univariate", **opts)[1],
            train("rnn", biv, base, seed=seed, name="rnn", **opts)[1],
        ]
        if lstm:
            runs.append(train("lstm", biv, base, seed=seed, name="lstm", **opts)[1])
        report = runs[0]
        for r in runs[1:]:
            report = report.merge(r)
        out.reports[seed] = report
    return out
