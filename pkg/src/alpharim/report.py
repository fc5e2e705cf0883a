"""Experiment reports: tables in the layout of the published results, a
JSON/CSV machine-readable form, and matplotlib figures."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

SPLITS = ("train", "val", "test")
DISPLAY = {"rnn": "RNN", "lstm": "LSTM", "alpha_rnn": "alpha-RNN", "alpha_t_rnn": "alpha_t-RNN",
           "alpha_t_rim": "alpha_t-RIM"}


@dataclass
class ModelResult:
    name: str
    kind: str
    hyper: dict
    metrics: dict  # split -> {"mse": .., "mae": ..} on the standardised scale
    mape: dict  # split -> per-step MAPE (%) on re-scaled prices
    epochs_run: int = 0
    history: list = field(default_factory=list)


@dataclass
class ExperimentReport:
    results: list
    config: dict
    seed: int
    horizon: int = 5
    timings: dict = field(default_factory=dict)

    def __post_init__(self):
        for r in self.results:
            for split, v in r.mape.items():
                if len(v) != self.horizon:
                    raise ValueError(f"{r.name}/{split}: MAPE has {len(v)} steps, horizon is {self.horizon}")

    def result(self, name: str) -> ModelResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def merge(self, other: "ExperimentReport") -> "ExperimentReport":
        names = {r.name for r in self.results}
        clash = names & {r.name for r in other.results}
        if clash:
            raise ValueError(f"duplicate model names {sorted(clash)}")
        return ExperimentReport(
            self.results + other.results, {**self.config, **other.config}, self.seed,
            self.horizon, {**self.timings, **other.timings},
        )

    def to_dict(self, include_timings: bool = True) -> dict:
        d = {
            "format": "alpharim-report/1",
            "seed": self.seed,
            "horizon": self.horizon,
            "config": self.config,
            "results": [asdict(r) for r in self.results],
        }
        if include_timings:
            d["timings"] = self.timings
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        if d.get("format") != "alpharim-report/1":
            raise ValueError(f"unsupported report format {d.get('format')!r}")
        return cls(
            [ModelResult(**r) for r in d["results"]], d["config"], d["seed"], d["horizon"],
            d.get("timings", {}),
        )


def _fmt(v: float) -> str:
    return f"{v:.4f}"


def metrics_table(report: ExperimentReport) -> str:
    rows = [("Model", "MSE", "MAE")]
    best = {}
    for split in SPLITS:
        vals = [r.metrics[split] for r in report.results if split in r.metrics]
        if vals:
            best[split] = (min(v["mse"] for v in vals), min(v["mae"] for v in vals))
    for r in report.results:
        for split in SPLITS:
            if split not in r.metrics:
                continue
            m = r.metrics[split]
            mark = lambda v, b: _fmt(v) + ("*" if len(report.results) > 1 and v == b else "")
            rows.append((f"{r.name} {split}", mark(m["mse"], best[split][0]), mark(m["mae"], best[split][1])))
    return _render(rows)


def mape_table(report: ExperimentReport, split: str = "test") -> str:
    models = [r for r in report.results if split in r.mape]
    rows = [("Lag",) + tuple(f"{r.name} MAPE" for r in models)]
    for s in range(report.horizon):
        vals = [r.mape[split][s] for r in models]
        lo = min(vals) if vals else None
        rows.append((str(s + 1),) + tuple(
            _fmt(v) + ("*" if len(models) > 1 and v == lo else "") for v in vals
        ))
    return _render(rows)


def _render(rows) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    line = lambda r: "  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths)))
    rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
    return "\n".join([line(rows[0]), rule] + [line(r) for r in rows[1:]])


def to_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["table", "model", "split", "metric", "step", "value"])
    for r in report.results:
        for split, m in r.metrics.items():
            for metric in ("mse", "mae"):
                w.writerow(["metrics", r.name, split, metric, "", repr(float(m[metric]))])
        for split, v in r.mape.items():
            for s, val in enumerate(v, start=1):
                w.writerow(["mape", r.name, split, "mape", s, repr(float(val))])
    return buf.getvalue()


def emit_report(report: ExperimentReport, fmt: str = "text") -> str:
    """Render ``report`` as ``text`` tables, ``json`` or long-format ``csv``.

    In the text tables the best value of each row/column group is marked
    with ``*``.
    """
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if fmt == "csv":
        return to_csv(report)
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    parts = [
        f"seed {report.seed}, horizon {report.horizon}",
        "",
        "Evaluation metrics (standardised log prices)",
        metrics_table(report),
    ]
    for split in ("test", "val"):
        if any(split in r.mape for r in report.results):
            parts += ["", f"Re-scaled {split} MAPE (%) per step ahead", mape_table(report, split)]
    return "\n".join(parts) + "\n"


def parse_report(text: str) -> ExperimentReport:
    return ExperimentReport.from_dict(json.loads(text))


def load_report(path) -> ExperimentReport:
    return parse_report(Path(path).read_text(encoding="utf-8"))


def render_figures(report: ExperimentReport, outdir, prefix: str = "report") -> list[Path]:
    """Write MAPE-per-step and MSE/MAE-per-split figures as PNG files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    steps = np.arange(1, report.horizon + 1)

    fig, ax = plt.subplots(figsize=(6, 4))
    for r in report.results:
        if "test" in r.mape:
            ax.plot(steps, r.mape["test"], marker="o", label=r.name)
    ax.set_xlabel("steps ahead")
    ax.set_ylabel("test MAPE (%)")
    ax.set_xticks(steps)
    ax.grid(alpha=0.3)
    ax.legend(frameon=False)
    fig.tight_layout()
    p = outdir / f"{prefix}_mape.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    width = 0.8 / max(len(report.results), 1)
    x = np.arange(len(SPLITS))
    for metric, ax in zip(("mse", "mae"), axes):
        for i, r in enumerate(report.results):
            vals = [r.metrics.get(s, {}).get(metric, np.nan) for s in SPLITS]
            ax.bar(x + i * width, vals, width, label=r.name)
        ax.set_xticks(x + width * (len(report.results) - 1) / 2)
        ax.set_xticklabels(SPLITS)
        ax.set_title(metric.upper())
    axes[0].legend(frameon=False, fontsize=8)
    fig.tight_layout()
    p = outdir / f"{prefix}_metrics.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)
    return paths
