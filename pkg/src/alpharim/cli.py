"""Command-line entry point: ``alpharim <subcommand>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, ExperimentConfig, default_hyper, load_config
from .data import PreparedData, generate_synthetic, ingest, prepare, triangular_kernel, write_series
from .gradcheck import check_all
from .models import MODEL_KINDS
from .numeric import make_rng
from .report import ExperimentReport, ModelResult, emit_report, load_report, render_figures
from .rim import LOOKBACKS
from .search import baseline_grid, sample_hyper_dicts
from .training import evaluate, train, ts_cross_validate

log = logging.getLogger("alpharim")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    if getattr(args, "model", None):
        cfg.model.kind = args.model
    if getattr(args, "lookback", None):
        cfg.model.lookback = args.lookback
    if getattr(args, "univariate", False):
        cfg.model.bivariate = False
    if getattr(args, "seed", None) is not None:
        cfg.train.seed = args.seed
    if getattr(args, "epochs", None) is not None:
        cfg.train.epochs = args.epochs
    if getattr(args, "price", None):
        cfg.data.price = args.price
    if getattr(args, "sentiment", None):
        cfg.data.sentiment = args.sentiment
    return cfg


def _data(cfg: ExperimentConfig) -> PreparedData:
    if cfg.data.price:
        sent = cfg.data.sentiment if cfg.model.bivariate else None
        raw = ingest(cfg.data.price, sent)
    else:
        raw = generate_synthetic(cfg.synth)
        if not cfg.model.bivariate:
            raw = raw.univariate()
    split = cfg.split_for(raw.dates)
    return prepare(raw, split, cfg.model.lookback, 5, cfg.model.bivariate,
                   triangular_kernel(cfg.data.kernel_width))


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_synth(args) -> int:
    cfg = _config(args)
    spec = cfg.synth
    if args.length or args.seed is not None:
        from dataclasses import replace

        spec = replace(spec, **{k: v for k, v in (("length", args.length), ("seed", args.seed)) if v is not None})
    raw = generate_synthetic(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_series(raw, out / "prices.csv", out / "sentiment.csv")
    print(f"wrote {len(raw)} rows to {out / 'prices.csv'} and {out / 'sentiment.csv'}")
    return 0


def _hyper(cfg, args) -> dict:
    h = cfg.hyper()
    if getattr(args, "hyper", None):
        h.update(json.loads(Path(args.hyper).read_text()) if Path(args.hyper).exists() else json.loads(args.hyper))
    return h


def cmd_train(args) -> int:
    cfg = _config(args)
    data = _data(cfg)
    hyper = _hyper(cfg, args)
    t = cfg.train
    params, report = train(cfg.model.kind, data, hyper, t.epochs, t.seed, t.batch_size, t.lr, t.patience)
    if args.checkpoint:
        from .models import build_model

        model = build_model(cfg.model.kind, hyper, data.n_features, data.lookback, data.horizon)
        save_checkpoint(args.checkpoint, model, params, t.seed, {"hyper": hyper})
        print(f"checkpoint written to {args.checkpoint}", file=sys.stderr)
    if args.report:
        _write(args.report, emit_report(report, "json"))
    print(emit_report(report, "text"))
    return 0


def cmd_evaluate(args) -> int:
    model, params, header = load_checkpoint(args.checkpoint)
    cfg = _config(args)
    cfg.model.lookback = model.lookback
    cfg.model.bivariate = model.n_features == 2
    data = _data(cfg)
    metrics, mapes = evaluate(model, params, data)
    kind = header["model"]["kind"]
    res = ModelResult(args.name or kind, kind, header.get("extra", {}).get("hyper", {}), metrics, mapes)
    report = ExperimentReport([res], {res.name: {"checkpoint": str(args.checkpoint), "model": header["model"]}},
                              header["seed"], data.horizon)
    if args.report:
        _write(args.report, emit_report(report, "json"))
    print(emit_report(report, "text"))
    return 0


def cmd_grid_search(args) -> int:
    cfg = _config(args)
    data = _data(cfg)
    kind = cfg.model.kind
    rng = make_rng(cfg.train.seed)
    if kind == "alpha_t_rim":
        grid = sample_hyper_dicts(rng, args.samples)
        folds = args.folds or 3
    else:
        grid = baseline_grid(full=args.full_grid)
        folds = args.folds or 5
    best, scores = ts_cross_validate(kind, data.train, grid, folds, cfg.train.epochs, cfg.train.seed,
                                     data.lookback, data.horizon, cfg.train.batch_size, cfg.train.lr)
    out = {"kind": kind, "folds": folds, "best": best,
           "candidates": [{"hyper": g, "mean_val_mse": s} for g, s in zip(grid, scores)]}
    _write(args.out, json.dumps(out, indent=2, default=float) + "\n")
    return 0


def cmd_gradcheck(args) -> int:
    errs = check_all(seed=args.seed or 0)
    ok = True
    for name, err in errs.items():
        passed = err <= args.tol
        ok &= passed
        print(f"{name:12s} max relative error {err:.3e}  {'PASS' if passed else 'FAIL'}")
    return 0 if ok else 1


def cmd_report(args) -> int:
    reports = [load_report(p) for p in args.inputs]
    report = reports[0]
    for r in reports[1:]:
        report = report.merge(r)
    print(emit_report(report, args.format), end="")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{args.prefix}.csv").write_text(emit_report(report, "csv"), encoding="utf-8")
        (out / f"{args.prefix}.txt").write_text(emit_report(report, "text"), encoding="utf-8")
        for p in render_figures(report, out, args.prefix):
            print(f"figure: {p}", file=sys.stderr)
    return 0


def cmd_experiment(args) -> int:
    from .experiment import run_desk_experiment

    res = run_desk_experiment(seeds=range(args.seeds), epochs=args.epochs)
    for seed, report in res.reports.items():
        print(emit_report(report, "text"))
    print(res.summary())
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for seed, report in res.reports.items():
            (out / f"seed{seed}.json").write_text(emit_report(report, "json"), encoding="utf-8")
            render_figures(report, out, f"seed{seed}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="alpharim", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", help="YAML experiment configuration")
        p.add_argument("--seed", type=int)
        if data:
            p.add_argument("--model", choices=MODEL_KINDS)
            p.add_argument("--lookback", type=int, choices=LOOKBACKS)
            p.add_argument("--univariate", action="store_true", help="price only (default: price + sentiment)")
            p.add_argument("--epochs", type=int)
            p.add_argument("--price", help="CSV with header date,close (default: synthetic data)")
            p.add_argument("--sentiment", help="CSV with header date,sentiment")

    p = sub.add_parser("synth", help="write synthetic price/sentiment CSV files")
    common(p, data=False)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--length", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one model and print its report")
    common(p)
    p.add_argument("--hyper", help="JSON dict (or file) overriding hyperparameters")
    p.add_argument("--checkpoint", help="write trained parameters here (.npz)")
    p.add_argument("--report", help="write the JSON report here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid-search", help="walk-forward cross-validated hyperparameter search")
    common(p)
    p.add_argument("--folds", type=int)
    p.add_argument("--samples", type=int, default=20, help="random dicts for the alpha_t-RIM search")
    p.add_argument("--full-grid", action="store_true", help="full baseline grid instead of the reduced one")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_grid_search)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint")
    common(p)
    p.add_argument("checkpoint")
    p.add_argument("--name")
    p.add_argument("--report")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="compare backprop with finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="merge JSON reports, print tables, write CSV and figures")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--format", choices=("text", "json", "csv"), default="text")
    p.add_argument("--out-dir")
    p.add_argument("--prefix", default="report")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("experiment", help="desk-scale comparison on synthetic data")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
