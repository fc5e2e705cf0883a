"""YAML experiment configuration with strict key checking."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import yaml

from .data import SplitSpec, SynthSpec
from .models import MODEL_KINDS
from .rim import LOOKBACKS


class ConfigError(ValueError):
    pass


DEFAULT_RIM_HYPER = {
    "units": 10,
    "k_modules": 4,
    "num_rims": 2,
    "input_key_size": 4,
    "input_value_size": 4,
    "input_query_size": 4,
    "input_heads": 2,
    "input_keep_prob": 0.9,
    "comm_heads": 2,
    "comm_key_size": 4,
    "comm_value_size": 4,
    "comm_query_size": 4,
    "comm_keep_prob": 0.9,
    "l1": 0.0001,
}
DEFAULT_BASELINE_HYPER = {"units": 10, "l1": 0.0001, "dropout": 0.1}
_HYPER_KEYS = set(DEFAULT_RIM_HYPER) | {"include_self_in_comm", "feature_tags", "input_heads", "dropout"}


def default_hyper(kind: str) -> dict:
    return dict(DEFAULT_RIM_HYPER if kind == "alpha_t_rim" else DEFAULT_BASELINE_HYPER)


@dataclass
class ModelSection:
    kind: str = "alpha_t_rim"
    lookback: int = 10
    bivariate: bool = True
    grid_mode: bool = False
    hyper: dict = field(default_factory=dict)


@dataclass
class TrainSection:
    epochs: int = 200
    batch_size: int = 32
    lr: float = 1e-3
    patience: Optional[int] = 20
    seed: int = 0


@dataclass
class DataSection:
    price: Optional[str] = None
    sentiment: Optional[str] = None
    split: Optional[dict] = None
    kernel_width: int = 7


@dataclass
class ExperimentConfig:
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    data: DataSection = field(default_factory=DataSection)
    synth: SynthSpec = field(default_factory=SynthSpec)

    def hyper(self) -> dict:
        h = default_hyper(self.model.kind)
        h.update(self.model.hyper)
        return h

    def split_for(self, dates) -> SplitSpec:
        s = self.data.split
        if s is None:
            return SplitSpec.by_fraction(dates)
        if s == "sp500":
            return SplitSpec.sp500_default()
        if "fractions" in s:
            if set(s) != {"fractions"}:
                raise ConfigError("split: 'fractions' cannot be combined with date ranges")
            return SplitSpec.by_fraction(dates, *s["fractions"])
        unknown = set(s) - {"train", "val", "test", "exclude"}
        if unknown:
            raise ConfigError(f"split: unknown keys {sorted(unknown)}")
        return SplitSpec(tuple(s["train"]), tuple(s["val"]), tuple(s["test"]),
                         tuple(tuple(r) for r in s.get("exclude", ())))


def _section(cls, raw, where: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return cls(**raw)


def parse_config(raw: dict) -> ExperimentConfig:
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = set(raw) - {"model", "train", "data", "synth"}
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    cfg = ExperimentConfig(
        _section(ModelSection, raw.get("model"), "model"),
        _section(TrainSection, raw.get("train"), "train"),
        _section(DataSection, raw.get("data"), "data"),
        _section(SynthSpec, raw.get("synth"), "synth"),
    )
    m = cfg.model
    if m.kind not in MODEL_KINDS:
        raise ConfigError(f"model.kind must be one of {MODEL_KINDS}")
    if m.lookback not in LOOKBACKS:
        raise ConfigError(f"model.lookback must be one of {LOOKBACKS}")
    bad = set(m.hyper) - _HYPER_KEYS
    if bad:
        raise ConfigError(f"model.hyper: unknown keys {sorted(bad)}")
    if m.grid_mode:
        from .search import validate_hyper

        try:
            validate_hyper(cfg.hyper() if m.kind == "alpha_t_rim" else {k: cfg.hyper()[k] for k in ("units", "l1", "dropout")}, m.kind)
        except ValueError as exc:
            raise ConfigError(f"model.hyper: {exc}") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(yaml.safe_load(fh))


def dump_config(cfg: ExperimentConfig) -> str:
    from dataclasses import asdict

    return yaml.safe_dump(asdict(cfg), sort_keys=False)
