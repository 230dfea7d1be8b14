"""Acceptance gate: one test per criterion, each printing a PASS line.

All settings and tolerances are pinned in this module.  Criteria 1-8
build canonical JSON reports through builder functions parameterised by
thread count; the determinism criterion reruns every builder with a
different thread count and compares report bytes.
"""

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from mpinfer.bench import (
    run_coverage, run_power, run_predictive_coverage, run_selection, run_width,
)
from mpinfer.conformal import quantile_minus, quantile_plus
from mpinfer.core import Dataset, MPConfig, Task, error_score
from mpinfer.ensemble import train_ensemble
from mpinfer.learners import FIT_CALLS, RidgeLearner
from mpinfer.loco import infer_all
from mpinfer.oracle import (
    LinearTargetParams, brute_force_predictor, correlated_closed_form_limits,
    linear_closed_form_target, monte_carlo_target,
)
from mpinfer.rng import generator, spawn_seed, standard_normal, uniform_open
from mpinfer.simgen import SimSpec, sampler, generate, true_beta

MASTER_SEED = 20240817
THREADS = 4

RIDGE_CFG = MPConfig(K=2000, alpha=0.1, learner=RidgeLearner(lam=1e-4),
                     buffer_c=5e-6, use_buffer=True)

_CACHE: dict = {}


def _report(name: str, threads: int) -> str:
    key = (name, threads)
    if key not in _CACHE:
        _CACHE[key] = _BUILDERS[name](threads)
    return _CACHE[key]


def _canon(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _ok(criterion: str, detail: str) -> None:
    print(f"[PASS] {criterion}: {detail}")


# -- criterion 1: exhaustive-enumeration equivalence ------------------------

def _c1_dataset() -> Dataset:
    gen = generator(MASTER_SEED, "c1-data")
    X = standard_normal(gen, (6, 4))
    Y = X @ np.array([1.0, -0.5, 0.25, 2.0]) + standard_normal(gen, 6)
    return Dataset(X=X, Y=Y, task=Task.REGRESSION)


def _build_c1(threads: int) -> str:
    ds = _c1_dataset()
    learner = RidgeLearner(lam=0.0)
    bf = brute_force_predictor(ds, n=3, m=2, learner=learner)
    ens = train_ensemble(ds, MPConfig(seed=0, learner=learner),
                         patches=bf.enumeration(), threads=threads)
    gen = generator(MASTER_SEED, "c1-probes")
    probes = standard_normal(gen, (3, 4))
    diffs = []
    for i in range(6):
        diffs.append(abs(bf.loo_prediction(i)[0] - ens.loo_prediction(i)[0]))
        for j in range(4):
            diffs.append(abs(bf.loo_loco_prediction(i, j)[0]
                             - ens.loo_loco_prediction(i, j)[0]))
        for t in range(3):
            diffs.append(abs(bf.loo_prediction_new(i, probes[t])[0]
                             - ens.loo_prediction_new(i, probes[t])[0]))
    return _canon({"patches": len(bf.fits), "queries": len(diffs),
                   "max_diff": max(diffs)})


def test_criterion_1_brute_force_equivalence():
    start = time.time()
    report = _BUILDERS["c1"](THREADS)
    elapsed = time.time() - start
    _CACHE[("c1", THREADS)] = report
    payload = json.loads(report)
    assert payload["patches"] == 120
    assert payload["max_diff"] <= 1e-12
    assert elapsed < 1.0, f"took {elapsed:.2f}s"
    _ok("criterion 1 (exhaustive equivalence)",
        f"120 patches, {payload['queries']} queries, "
        f"max diff {payload['max_diff']:.2e}, {elapsed:.2f}s")


# -- criterion 2: closed-form target values ---------------------------------

def _build_c2(threads: int) -> str:
    null_case = linear_closed_form_target(
        LinearTargetParams(beta=[0, 1, 1, 1, 1], gamma=0.2, M=5, j=0))
    lone_signal = linear_closed_form_target(
        LinearTargetParams(beta=[2, 0, 0, 0, 0], gamma=0.2, M=5, j=0))
    zero = linear_closed_form_target(
        LinearTargetParams(beta=np.zeros(5), gamma=0.2, M=5, j=0))
    gamma, M, rest = 0.2, 5, 4.0
    null_alt = -gamma * (2 * (1 - gamma) * M - 2 + gamma) * rest / (M - 1) ** 2
    _, rho1 = correlated_closed_form_limits([1, 1, 0, 0, 0], m=1, M=5, j=0)
    return _canon({"null": null_case, "null_alt": null_alt,
                   "lone": lone_signal, "zero": zero, "rho1": rho1})


def test_criterion_2_closed_form_values():
    payload = json.loads(_report("c2", THREADS))
    assert abs(payload["null"] - (-0.31)) <= 1e-12
    assert abs(payload["lone"] - 1.44) <= 1e-12
    assert payload["zero"] == 0.0
    assert abs(payload["null"] - payload["null_alt"]) <= 1e-12
    assert abs(payload["rho1"] - 0.81) <= 1e-12
    _ok("criterion 2 (closed-form targets)",
        "values -0.31, 1.44, 0, 0.81 reproduced to 1e-12")


# -- criterion 3: Monte Carlo vs closed form --------------------------------

C3_REPLICATES = 25


def _build_c3(threads: int) -> str:
    spec = SimSpec(model="linear", task="regression", N=2000, M=20, snr=0.0,
                   seed=0)
    closed = linear_closed_form_target(
        LinearTargetParams(beta=true_beta(spec), gamma=0.25, M=20, j=0))
    cfg = MPConfig(m=5, K=10_000, learner=RidgeLearner(lam=0.0))

    def one(rep: int) -> dict:
        rep_seed = spawn_seed(MASTER_SEED, "c3", rep)
        data = generate(SimSpec(model="linear", task="regression", N=2000,
                                M=20, snr=0.0,
                                seed=spawn_seed(rep_seed, "data")))
        mc = monte_carlo_target(data, cfg, 0, sampler(spec), n_test=10_000,
                                seed=spawn_seed(rep_seed, "mc"),
                                error="squared")
        return {"rep": rep, "mc": mc.value, "se": mc.se,
                "hit": bool(abs(mc.value - closed) < 3.0 * mc.se)}

    if threads <= 1:
        rows = [one(r) for r in range(C3_REPLICATES)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, range(C3_REPLICATES)))
    hits = sum(r["hit"] for r in rows)
    return _canon({"closed_form": closed, "hits": hits, "rows": rows})


def test_criterion_3_mc_vs_closed_form():
    payload = json.loads(_report("c3", THREADS))
    assert payload["hits"] >= 20, f"only {payload['hits']}/25 within 3 se"
    _ok("criterion 3 (MC vs closed form)",
        f"{payload['hits']}/25 replicates within 3 MC standard errors "
        f"of {payload['closed_form']:.4f}")


# -- criterion 4: feature-importance coverage --------------------------------

def _build_c4(threads: int) -> str:
    out = {}
    for N in (250, 500):
        spec = SimSpec(model="linear", task="regression", N=N, M=50, snr=0.0,
                       seed=0)
        rep = run_coverage(spec, RIDGE_CFG, j=0, replicates=50,
                           seed=spawn_seed(MASTER_SEED, "c4", N),
                           threads=threads)
        out[str(N)] = json.loads(rep.to_json())
    return _canon(out)


def test_criterion_4_importance_coverage():
    payload = json.loads(_report("c4", THREADS))
    rates = {N: payload[N]["metrics"]["coverage"] for N in ("250", "500")}
    for N, rate in rates.items():
        assert 0.78 <= rate <= 1.0, f"coverage {rate} at N={N}"
    _ok("criterion 4 (importance coverage)",
        f"coverage N=250: {rates['250']:.3f}, N=500: {rates['500']:.3f} "
        "(band [0.78, 1.00])")


# -- criterion 5: width shrinkage --------------------------------------------

def _build_c5(threads: int) -> str:
    spec = SimSpec(model="linear", task="regression", N=250, M=50, snr=0.0,
                   seed=0)
    rep = run_width(spec, RIDGE_CFG, j=0, n_grid=[250, 1000], replicates=30,
                    seed=spawn_seed(MASTER_SEED, "c5"), threads=threads)
    return rep.to_json()


def test_criterion_5_width_shrinkage():
    payload = json.loads(_report("c5", THREADS))
    widths = payload["metrics"]["median_width_by_N"]
    ratio = widths["1000"] / widths["250"]
    assert widths["1000"] < widths["250"]
    assert ratio <= 0.75, f"width ratio {ratio}"
    _ok("criterion 5 (width shrinkage)",
        f"median width {widths['250']:.5f} -> {widths['1000']:.5f}, "
        f"ratio {ratio:.3f} <= 0.75")


# -- criterion 6: type-I error and power -------------------------------------

def _build_c6(threads: int) -> str:
    spec = SimSpec(model="linear", task="regression", N=500, M=50, snr=0.0,
                   seed=0)
    rep = run_power(spec, RIDGE_CFG, j=0, snr_grid=[0.0, 10.0], replicates=50,
                    seed=spawn_seed(MASTER_SEED, "c6"), threads=threads)
    return rep.to_json()


def test_criterion_6_type1_and_power():
    payload = json.loads(_report("c6", THREADS))
    power = payload["metrics"]["power"]
    null_rate, signal_rate = power["0.0"], power["10.0"]
    assert null_rate <= 0.2, f"null rejection rate {null_rate}"
    assert signal_rate >= null_rate + 0.4, (
        f"power {signal_rate} vs null {null_rate}")
    _ok("criterion 6 (type-I / power)",
        f"rejection at SNR=0: {null_rate:.2f} (<= 0.2), "
        f"at SNR=10: {signal_rate:.2f} (>= null + 0.4)")


# -- criterion 7: selection F1 ------------------------------------------------

def _build_c7(threads: int) -> str:
    spec = SimSpec(model="linear", task="regression", N=500, M=50, snr=5.0,
                   seed=0)
    rep = run_selection(spec, RIDGE_CFG, replicates=20,
                        seed=spawn_seed(MASTER_SEED, "c7"), threads=threads)
    return rep.to_json()


def test_criterion_7_selection_f1():
    payload = json.loads(_report("c7", THREADS))
    f1 = payload["metrics"]["mean_f1"]
    assert f1 >= 0.8, f"mean F1 {f1}"
    _ok("criterion 7 (selection F1)", f"mean F1 {f1:.3f} >= 0.8 over 20 reps")


# -- criterion 8: predictive coverage ----------------------------------------

def _build_c8(threads: int) -> str:
    out = {}
    for task in ("regression", "classification"):
        spec = SimSpec(model="linear", task=task, N=250, M=50, snr=5.0, seed=0)
        rep = run_predictive_coverage(
            spec, RIDGE_CFG, ensembles=20, points_per_ensemble=100,
            seed=spawn_seed(MASTER_SEED, "c8", task), threads=threads)
        out[task] = json.loads(rep.to_json())
    return _canon(out)


def test_criterion_8_predictive_coverage():
    payload = json.loads(_report("c8", THREADS))
    floor = 0.80 - 3.0 * math.sqrt(0.8 * 0.2 / 2000.0)
    reg = payload["regression"]["metrics"]["coverage"]
    cls = payload["classification"]["metrics"]["coverage"]
    assert payload["regression"]["metrics"]["evaluations"] == 2000
    assert reg >= floor, f"regression coverage {reg} < {floor:.4f}"
    assert cls >= floor, f"classification coverage {cls} < {floor:.4f}"
    _ok("criterion 8 (predictive coverage)",
        f"regression {reg:.3f}, classification {cls:.3f} "
        f"(floor {floor:.3f}; observed rates reported)")


# -- criterion 9: quantile and error-function unit oracles --------------------

def test_criterion_9_unit_oracles():
    gen = generator(MASTER_SEED, "c9-quantiles")
    for _ in range(1000):
        n = int(gen.integers(1, 50))
        if gen.integers(0, 2) == 0:
            values = gen.integers(-4, 5, n).astype(float)
        else:
            values = standard_normal(gen, n)
        alpha = float(uniform_open(gen)) * 0.98 + 0.01
        ranked = np.sort(values)
        r_plus = math.ceil(round((1 - alpha) * (n + 1), 9))
        want_plus = ranked[r_plus - 1] if r_plus <= n else math.inf
        r_minus = math.floor(round(alpha * (n + 1), 9))
        want_minus = ranked[r_minus - 1] if r_minus >= 1 else -math.inf
        assert quantile_plus(values, alpha) == want_plus
        assert quantile_minus(values, alpha) == want_minus

    gen = generator(MASTER_SEED, "c9-lipschitz")
    for _ in range(1000):
        y, a, b = uniform_open(gen, 3) * 10.0 - 5.0
        gap = abs(error_score(Task.REGRESSION, y, np.array([a]))
                  - error_score(Task.REGRESSION, y, np.array([b])))
        assert gap <= abs(a - b) + 1e-12
        d = int(gen.integers(2, 5))
        label = int(gen.integers(0, d))
        p1 = uniform_open(gen, d)
        p1 /= p1.sum()
        p2 = uniform_open(gen, d)
        p2 /= p2.sum()
        gap = abs(error_score(Task.CLASSIFICATION, label, p1)
                  - error_score(Task.CLASSIFICATION, label, p2))
        assert gap <= float(np.linalg.norm(p1 - p2)) + 1e-12
    _ok("criterion 9 (unit oracles)",
        "quantile ranks exact on 1000 vectors; error functions 1-Lipschitz "
        "on 1000 triples per task")


# -- criterion 10: no refits during inference ---------------------------------

def test_criterion_10_no_refit():
    spec = SimSpec(model="linear", task="regression", N=120, M=12, snr=3.0,
                   seed=1)
    ds = generate(spec)
    ens = train_ensemble(ds, MPConfig(K=600, seed=2,
                                      learner=RidgeLearner(lam=1e-4)))
    before = FIT_CALLS.value()
    report = infer_all(ens, bonferroni=True)
    after = FIT_CALLS.value()
    assert after == before, f"{after - before} fits during inference"
    assert len(report.intervals) == 12
    _ok("criterion 10 (no refits)",
        "fit counter unchanged across a full-feature inference pass")


# -- criterion 11: thread-count determinism -----------------------------------

def test_criterion_11_determinism():
    mismatches = []
    for name in ("c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8"):
        primary = _report(name, THREADS)
        rerun = _report(name, 1)
        if primary != rerun:
            mismatches.append(name)
    assert not mismatches, f"reports differ across thread counts: {mismatches}"
    _ok("criterion 11 (determinism)",
        f"criteria 1-8 reports byte-identical at {THREADS} threads vs 1")


_BUILDERS = {
    "c1": _build_c1,
    "c2": _build_c2,
    "c3": _build_c3,
    "c4": _build_c4,
    "c5": _build_c5,
    "c6": _build_c6,
    "c7": _build_c7,
    "c8": _build_c8,
}
