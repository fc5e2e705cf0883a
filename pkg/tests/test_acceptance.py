"""Acceptance suite: one PASS/FAIL line per criterion, at the stated
tolerances and runtime budgets.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or ``python tests/test_acceptance.py``.
"""

import json
import time

import numpy as np
import pytest

from alpharim.attention import (
    AttentionParams,
    build_input_objects,
    communication_attention,
    init_attention_params,
    input_attention,
    scaled_attention,
)
from alpharim.cells import CellState, alpha_t_step, alpha_unrolled, init_cell_params, run_cell, unrolled_weights
from alpharim.data import (
    SplitSpec,
    generate_synthetic,
    kernel_smooth,
    log_then_standardize,
    make_windows,
    prepare,
    rescale,
    triangular_kernel,
)
from alpharim.gradcheck import check_all
from alpharim.numeric import glorot_uniform, make_rng, orthogonal_init, softmax_rows
from alpharim.rim import RimConfig, forward, init_rim_params
from alpharim.search import L1_GRID, RIM_GRID, sample_hyper_dicts

RESULTS = []


def record(label, ok, detail, elapsed, budget):
    in_time = elapsed < budget
    status = "PASS" if ok and in_time else "FAIL"
    line = f"[{status}] {label}: {detail}; {elapsed:.1f}s (budget {budget:.0f}s)"
    RESULTS.append(line)
    assert ok, line
    assert in_time, line


def test_criterion_1_gradient_fidelity():
    t = time.perf_counter()
    errs = check_all(seed=0, l1=1e-3)
    worst = max(errs.values())
    detail = "max rel err " + ", ".join(f"{k} {v:.1e}" for k, v in errs.items())
    record("1 gradient fidelity (<= 1e-4)", worst <= 1e-4, detail, time.perf_counter() - t, 60)


def test_criterion_2_smoothing_equivalence():
    t = time.perf_counter()
    rng = make_rng(2024)
    worst_traj = worst_sum = 0.0
    for _ in range(1000):
        T = int(rng.integers(1, 21))
        units = int(rng.integers(1, 6))
        alphas = rng.uniform(0, 1, T)
        h_hats = rng.uniform(-1, 1, (T, units))
        h = h0 = rng.uniform(-1, 1, units)
        for a, hh in zip(alphas, h_hats):
            h = a * hh + (1 - a) * h
        worst_traj = max(worst_traj, float(np.max(np.abs(alpha_unrolled(list(h_hats), alphas, h0) - h))))
        coeffs, init = unrolled_weights(alphas)
        worst_sum = max(worst_sum, abs(float(coeffs.sum()) + init - 1.0))
    ok = worst_traj <= 1e-10 and worst_sum <= 1e-12
    record("2 smoothing equivalence", ok, f"traj err {worst_traj:.1e}, coeff-sum err {worst_sum:.1e}",
           time.perf_counter() - t, 5)


def test_criterion_3_reduction_chain():
    t = time.perf_counter()
    rng = make_rng(3)
    p = init_cell_params("alpha_t", 3, 4, rng)
    # alpha == 1 to machine precision at every step
    p["w_alpha_in"] = np.zeros(3)
    p["u_alpha"] = np.array(0.0)
    p["b_alpha"] = np.array(1e3)
    xs = rng.standard_normal((15, 3))
    a_out, _, _ = run_cell("alpha_t", p, xs)
    r_out, _, _ = run_cell("rnn", {k: p[k] for k in ("W_in", "U_rec", "b")}, xs)
    e1 = float(np.max(np.abs(np.array(a_out) - np.array(r_out))))

    cfg = RimConfig(units=4, num_modules_total=1, num_modules_active=1, lookback=10, input_heads=2)
    q = init_rim_params(cfg, rng)
    q = {k: v + 0.2 * rng.standard_normal(np.shape(v)) for k, v in q.items()}
    q["module.comm.W_output"] = np.zeros_like(q["module.comm.W_output"])
    x = rng.standard_normal((10, 2))
    _, tape = forward(x, q, cfg)
    att = AttentionParams(q["module.in_att.W_query"], q["in_att.W_key"], q["in_att.W_value"], cfg.input_heads)
    cell = {k: q[f"module.cell.{k}"][0] for k in ("W_in", "U_rec", "b", "w_alpha_in", "u_alpha", "b_alpha")}
    st = CellState(np.zeros(4), alpha_mem=np.array(0.0))
    for s in range(10):
        u, _, _ = input_attention(st.h_smooth[None], build_input_objects(x[s], tagged=True), att)
        st, h, _ = alpha_t_step(st, u[0], cell)
    e2 = float(np.max(np.abs(tape.final_h[0, 0] - h)))
    record("3 reduction chain (<= 1e-12)", e1 <= 1e-12 and e2 <= 1e-12,
           f"alpha_t=1 vs RNN {e1:.1e}, 1-module RIM vs alpha_t-RNN {e2:.1e}", time.perf_counter() - t, 5)


def test_criterion_4_attention_laws():
    t = time.perf_counter()
    rng = make_rng(4)
    sums = max(float(np.max(np.abs(softmax_rows(rng.standard_normal((6, 9)) * 30).sum(axis=1) - 1)))
               for _ in range(200))
    V = rng.standard_normal((4, 3))
    K = np.zeros((4, 2))
    K[2] = [1.0, 0.0]
    sat = float(np.max(np.abs(scaled_attention([[1e4, 0.0]], K, V).attended[0] - V[2])))
    p1 = init_attention_params(1, 3, 2, 1, 4, 3, rng)
    h = rng.standard_normal((1, 3))
    X = rng.standard_normal((5, 2))
    mh, _, _ = input_attention(h, X, p1)
    one_head = float(np.max(np.abs(mh - scaled_attention(h @ p1.W_query[0], X @ p1.W_key, X @ p1.W_value).attended)))
    pc = init_attention_params(6, 4, 4, 2, 3, 3, rng, out_units=4)
    zero_ok = True
    for _ in range(100):
        act = np.zeros((3, 6), dtype=bool)
        for b in range(3):
            act[b, rng.choice(6, 3, replace=False)] = True
        delta, _ = communication_attention(rng.standard_normal((3, 6, 4)), act, pc, rng, 0.8, True)
        zero_ok &= bool(np.all(delta[~act] == 0.0))
    cfg = RimConfig(units=5, num_modules_total=6, num_modules_active=3, lookback=21)
    q = init_rim_params(cfg, rng)
    _, tape = forward(rng.standard_normal((16, 21, 2)), q, cfg, train=True, rng=rng)
    counts_ok = bool(np.all(tape.active_counts() == 3))
    ok = sums <= 1e-12 and sat <= 1e-9 and one_head <= 1e-12 and zero_ok and counts_ok
    detail = (f"row-sum err {sums:.1e}, saturation err {sat:.1e}, 1-head err {one_head:.1e}, "
              f"inactive deltas zero {zero_ok}, exactly 3 of 6 active {counts_ok}")
    record("4 attention laws", ok, detail, time.perf_counter() - t, 10)


def test_criterion_5_initialization():
    t = time.perf_counter()
    rng = make_rng(5)
    orth = 0.0
    for n in range(1, 65):
        w = orthogonal_init(n, rng)
        orth = max(orth, float(np.max(np.abs(w.T @ w - np.eye(n)))))
    glorot_ok = True
    for r in range(1, 60, 3):
        for c in range(1, 60, 4):
            glorot_ok &= bool(np.max(np.abs(glorot_uniform(r, c, rng))) <= np.sqrt(6 / (r + c)))
    record("5 initialization", orth <= 1e-10 and glorot_ok,
           f"max |W^T W - I| {orth:.1e} (n = 1..64), Glorot within bound {glorot_ok}", time.perf_counter() - t, 5)


def test_criterion_6_pipeline_integrity():
    t = time.perf_counter()
    rng = make_rng(6)
    raw = generate_synthetic()
    split = SplitSpec.by_fraction(raw.dates)
    _, stats = log_then_standardize(raw, split)
    tampered = raw.close.copy()
    for name in ("val", "test"):
        tampered[split.indices(raw.dates, name)] *= rng.uniform(0.5, 2.0, split.indices(raw.dates, name).size)
    _, stats2 = log_then_standardize(tampered, split, raw.dates)
    canary = np.array_equal(stats.mean, stats2.mean) and np.array_equal(stats.std, stats2.std)
    worst_rel = 0.0
    small_split = SplitSpec.by_fraction(raw.dates[:200])
    for _ in range(50):
        x = np.exp(rng.uniform(-5, 9, 200))
        z, s = log_then_standardize(x, small_split, raw.dates[:200])
        worst_rel = max(worst_rel, float(np.max(np.abs(rescale(z, s) / x - 1))))
    causal = True
    k = triangular_kernel(7)
    for _ in range(50):
        x = rng.standard_normal(60)
        c = int(rng.integers(0, 59))
        y2 = x.copy()
        y2[c + 1:] = rng.standard_normal(59 - c) * 100
        causal &= bool(np.array_equal(kernel_smooth(x, k)[: c + 1], kernel_smooth(y2, k)[: c + 1]))
    order = True
    data = prepare(raw, split, lookback=21)
    for ds in data.splits().values():
        order &= all(max(a) < min(b) for a, b in zip(ds.input_dates, ds.target_dates))
    w = make_windows(np.arange(300.0), 10, 5, raw.dates[:300])
    order &= all(max(a) < min(b) for a, b in zip(w.input_dates, w.target_dates))
    ok = canary and worst_rel <= 1e-10 and causal and order
    record("6 pipeline integrity", ok, f"leakage canary {canary}, rescale rel err {worst_rel:.1e}, "
           f"causal {causal}, window ordering {order}", time.perf_counter() - t, 5)


def test_criterion_7_grid_constraint():
    t = time.perf_counter()
    dicts = sample_hyper_dicts(make_rng(7), 10_000)
    grid = dict(RIM_GRID, l1=L1_GRID)
    ok = len(dicts) == 10_000 and all(
        d["num_rims"] <= d["k_modules"] and all(d[k] in v for k, v in grid.items()) for d in dicts
    )
    record("7 grid constraint", ok, f"{len(dicts)} dicts, all valid {ok}", time.perf_counter() - t, 5)


@pytest.fixture(scope="module")
def desk_runs():
    from alpharim.experiment import run_desk_experiment

    t = time.perf_counter()
    first = run_desk_experiment()
    second = run_desk_experiment()
    return first, second, time.perf_counter() - t


@pytest.mark.slow
def test_criterion_8a_error_grows_with_horizon(desk_runs):
    res, _, elapsed = desk_runs
    m = np.median(res.test_mape("alpha_t_rim"), axis=0)
    ok = m[0] < m[3] and m[0] < m[4]
    detail = "median test MAPE per step " + " ".join(f"{v:.4f}" for v in m) + "; step 1 < steps 4 and 5"
    record("8a MAPE step 1 below steps 4-5", ok, detail, elapsed, 900)


@pytest.mark.slow
def test_criterion_8b_sentiment_helps(desk_runs):
    res, _, elapsed = desk_runs
    bi, uni = res.median_test_mse("alpha_t_rim"), res.median_test_mse("alpha_t_rim_univariate")
    record("8b bivariate MSE <= univariate", bi <= uni, f"median test MSE {bi:.5f} vs {uni:.5f}", elapsed, 900)


@pytest.mark.slow
def test_criterion_8c_rim_vs_rnn(desk_runs):
    res, _, elapsed = desk_runs
    rim, rnn = res.median_test_mse("alpha_t_rim"), res.median_test_mse("rnn")
    record("8c alpha_t-RIM MSE <= simple RNN", rim <= rnn, f"median test MSE {rim:.5f} vs {rnn:.5f}", elapsed, 900)


@pytest.mark.slow
def test_criterion_9_determinism(desk_runs):
    first, second, elapsed = desk_runs
    dump = lambda r: {s: json.dumps(rep.to_dict(include_timings=False), sort_keys=True) for s, rep in r.reports.items()}
    ok = dump(first) == dump(second)
    record("9 determinism (two runs of 8)", ok, f"reports bitwise identical {ok}", elapsed, 900)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
