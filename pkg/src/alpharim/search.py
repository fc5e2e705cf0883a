"""Hyperparameter grids and constrained random sampling.

The alpha_t-RIM grid has twelve architecture/attention entries plus the L1
weight shared with the baselines. ``num_rims`` is the number of modules
activated per step and must not exceed ``k_modules``, the total number of
modules. Dot-product attention also requires each query size to equal the
matching key size.
"""

from __future__ import annotations

import itertools

import numpy as np

RIM_GRID = {
    "units": [2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 25, 30, 35, 40, 45, 50],
    "num_rims": [4, 6, 8, 10, 12, 14],
    "k_modules": [4, 6, 8, 10, 12, 14],
    "input_key_size": [4, 6, 8, 10, 12],
    "input_value_size": [4, 6, 8, 10, 12],
    "input_query_size": [4, 6, 8, 10, 12],
    "input_keep_prob": [0.6, 0.7, 0.8, 0.9],
    "comm_heads": [2, 4, 6, 8],
    "comm_key_size": [4, 6, 8, 10, 12],
    "comm_value_size": [4, 6, 8, 10, 12],
    "comm_query_size": [4, 6, 8, 10, 12],
    "comm_keep_prob": [0.6, 0.7, 0.8, 0.9],
}

L1_GRID = [0.0001, 0.001, 0.01, 0.10]
DROPOUT_GRID = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]
UNITS_GRID = list(range(5, 251, 5))

BASELINE_GRID = {"units": UNITS_GRID, "l1": L1_GRID, "dropout": DROPOUT_GRID}
# desk-scale default; the full grid is 1200 combinations
BASELINE_SUBGRID = {"units": [10, 20, 50], "l1": [0.0001, 0.001], "dropout": [0.1, 0.2]}


def rim_constraints_ok(d: dict) -> bool:
    return (
        d["num_rims"] <= d["k_modules"]
        and d["input_query_size"] == d["input_key_size"]
        and d["comm_query_size"] == d["comm_key_size"]
    )


def validate_hyper(d: dict, kind: str = "alpha_t_rim") -> dict:
    """Raise ``ValueError`` unless ``d`` is a valid grid member for ``kind``."""
    grid = dict(RIM_GRID, l1=L1_GRID) if kind == "alpha_t_rim" else BASELINE_GRID
    unknown = set(d) - set(grid) - {"include_self_in_comm", "feature_tags", "input_heads"}
    if unknown:
        raise ValueError(f"unknown hyperparameters: {sorted(unknown)}")
    for k, values in grid.items():
        if k == "l1" and k not in d:
            continue
        if k not in d:
            raise ValueError(f"missing hyperparameter {k!r}")
        if d[k] not in values:
            raise ValueError(f"{k}={d[k]!r} is not in its grid {values}")
    if kind == "alpha_t_rim" and not rim_constraints_ok(d):
        raise ValueError("constraint violated: num_rims <= k_modules and query size == key size")
    return d


def _as_python(v):
    return v.item() if isinstance(v, np.generic) else v


def sample_hyper_dicts(rng: np.random.Generator, n: int, include_l1: bool = True,
                       max_tries: int = 1_000_000, batch: int = 4096) -> list[dict]:
    """``n`` distinct alpha_t-RIM dicts drawn uniformly from the constrained grid.

    Candidates are drawn uniformly from the full cartesian grid in batches;
    constraint violators and repeats are discarded.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    grid = dict(RIM_GRID, l1=L1_GRID) if include_l1 else RIM_GRID
    keys = list(grid)
    tables = {k: np.asarray(grid[k]) for k in keys}
    seen, out = set(), []
    tries = 0
    while tries < max_tries:
        m = min(batch, max_tries - tries)
        tries += m
        idx = {k: rng.integers(len(grid[k]), size=m) for k in keys}
        vals = {k: tables[k][idx[k]] for k in keys}
        ok = (
            (vals["num_rims"] <= vals["k_modules"])
            & (vals["input_query_size"] == vals["input_key_size"])
            & (vals["comm_query_size"] == vals["comm_key_size"])
        )
        for i in np.flatnonzero(ok):
            key = tuple(int(idx[k][i]) for k in keys)
            if key in seen:
                continue
            seen.add(key)
            out.append({k: _as_python(grid[k][j]) for k, j in zip(keys, key)})
            if len(out) == n:
                return out
    raise RuntimeError(f"only {len(out)} distinct valid dicts found in {max_tries} draws")


def baseline_grid(full: bool = False) -> list[dict]:
    grid = BASELINE_GRID if full else BASELINE_SUBGRID
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
