"""End-to-end acceptance checks, one recorded line per criterion."""
import math
import time

import numpy as np
import pytest

from conftest import record
from oracles import brute_besov_energy
from test_norms import besov_cases
from test_operators import off_kink_points
from tracelab.dyadic import Box
from tracelab.grid import random_grid
from tracelab.lab import ExperimentConfig, run
from tracelab.norms import besov_seminorm
from tracelab.operators import extend_eval, extend_grad
from tracelab.weight import (A1_FAILS, WeightParams, ap_scan, mu_measure, power_log_integral,
                             power_log_integral_closed)


def report_line(rep):
    parts = []
    for a in rep.assertions:
        c = "" if a.constant is None else f" C={a.constant:.4g}"
        parts.append(f"{a.name}={a.value:.4g} (tol {a.tolerance:.3g}){c}")
    return "; ".join(parts)


def test_criterion_1_ap_dichotomy():
    t0 = time.perf_counter()
    ok, notes = True, []
    for lam in (-2.0, 2.0):
        scan = ap_scan(WeightParams(2, 0.5, lam), 12)
        finite = all(math.isfinite(r.ratio) for r in scan.rows)
        good = finite and abs(scan.fitted_exponent) <= 0.1
        ok &= good
        notes.append(f"alpha=0.5 lam={lam}: exponent {scan.fitted_exponent:.4f}")
    blow = ap_scan(WeightParams(2, 1, 3), 12)
    ok &= abs(blow.fitted_exponent - 1.0) <= 0.1
    notes.append(f"alpha=1 lam=3: exponent {blow.fitted_exponent:.4f} (naive log-log {blow.naive_slope:.3f})")
    dual = ap_scan(WeightParams(2, 1, 1), 12)
    ok &= all(math.isinf(r.right_factor) for r in dual.rows)
    notes.append(f"alpha=1 lam=1: dual infinite at {sum(math.isinf(r.right_factor) for r in dual.rows)}/13 levels")
    a1 = ap_scan(WeightParams(1, 0, -1), 12)
    ok &= a1.verdict == A1_FAILS
    notes.append(f"p=1 lam=-1: {a1.verdict}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 30
    record(1, ok, "; ".join(notes) + f"; {elapsed:.2f}s")
    assert ok


def test_criterion_2_counterexample():
    t0 = time.perf_counter()
    rep = run(ExperimentConfig("counterexample", p=1, lam=-1, beta=0, k_max=16))
    elapsed = time.perf_counter() - t0
    ok = rep.passed and elapsed < 60 and rep.flagged_rows == 0
    record(2, ok, report_line(rep) + f"; norms {rep.config['sobolev_norm']}; {elapsed:.1f}s")
    # the eps 2^-10 vs 2^-20 Cauchy check fails: the tail decays like 1/log(1/eps), see scripts/counterexample_tail.py
    assert ok, rep.summary()


@pytest.mark.parametrize("p,lam", [(1, 1), (2, 3)])
def test_criterion_3_trace_into_lp(p, lam):
    rep = run(ExperimentConfig("trace-bound", p=p, lam=lam, k_max=14))
    ok = rep.passed and rep.flagged_rows == 0
    record(3, ok, f"(p,lam)=({p},{lam}): " + report_line(rep))
    assert ok, rep.summary()


@pytest.mark.parametrize("p,lam", [(1, 1), (2, 3)])
def test_criterion_4_trace_into_besov(p, lam):
    cfg = ExperimentConfig("besov-trace-bound", p=p, lam=lam, j_max=4)
    rep = run(cfg)
    ok = rep.passed and rep.flagged_rows == 0
    record(4, ok, f"(p,lam)=({p},{lam}) gamma={cfg.trace_gamma}: " + report_line(rep))
    assert ok, rep.summary()


def test_criterion_5_extension_bound():
    rep = run(ExperimentConfig("extension-bound", p=1, lam=1, level=3, count=10, seed=0))
    ok = rep.passed and rep.flagged_rows == 0
    fe = rep.fitted_exponents
    record(5, ok, f"C(L=3)={fe['C_level']:.4g}, C(L=4)={fe['C_level_plus_1']:.4g}; " + report_line(rep))
    assert ok, rep.summary()


@pytest.mark.parametrize("L", [1, 2, 3])
def test_criterion_6_retraction(L):
    rep = run(ExperimentConfig("retraction", d=1, level=L, k_max=14, seed=L))
    record(6, rep.passed, f"L={L}: " + report_line(rep))
    assert rep.passed, rep.summary()


def test_criterion_7_partition():
    rep = run(ExperimentConfig("partition-check", d=1, samples=10_000, k_max=6))
    record(7, rep.passed, report_line(rep))
    assert rep.passed, rep.summary()


def test_criterion_8_besov_oracle():
    worst = 0.0
    for d, count in ((1, 50), (2, 10)):
        window = Box((-1.0,) * d, (2.0,) * d)
        for g, bp in besov_cases(d, count, seed=100 + d):
            got = besov_seminorm(g, bp).total
            want = math.fsum(brute_besov_energy(g.as_dict(), d, bp.p, bp.lam, bp.j_max, window))
            worst = max(worst, abs(got - want) / abs(want) if want else abs(got))
    ok = worst <= 1e-12
    record(8, ok, f"Besov sparse vs brute (50 d=1, 10 d=2): max rel {worst:.2e}")
    assert ok


def test_criterion_8_mu_closed_form():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(200):
        a = float(rng.uniform(0, 0.9))
        b = float(min(a + rng.uniform(0.01, 1.0), 1.0))
        beta = float(rng.uniform(-0.9, 3))
        got = power_log_integral(a, b, beta, 0)
        want = (b ** (beta + 1) - a ** (beta + 1)) / (beta + 1)
        worst = max(worst, abs(got - want) / want)
        assert power_log_integral_closed(a, b, beta, 0) == pytest.approx(want, rel=1e-13)
        alpha = float(rng.uniform(-0.9, 1.0))
        m = mu_measure(Box((0.0, a), (1.0, b)), WeightParams(2, alpha, 0))
        worst = max(worst, abs(m - (b ** (alpha + 1) - a ** (alpha + 1)) / (alpha + 1)) / m)
    ok = worst <= 1e-10
    record(8, ok, f"mu quadrature vs lambda=0 closed form: max rel {worst:.2e}")
    assert ok


def test_criterion_8_extend_grad():
    rng = np.random.default_rng(99)
    g = random_grid(rng, 3, 1)
    pts = off_kink_points(rng, 1000, 1, 1e-3)
    gr = extend_grad(g, pts)
    ell = 2.0 ** -(np.floor(-np.log2(pts[:, -1])) + 1)
    fd = np.empty_like(gr)
    for a in range(2):
        e = np.zeros(2)
        e[a] = 1.0
        h = ell / 1e4
        fd[:, a] = (extend_eval(g, pts + h[:, None] * e) - extend_eval(g, pts - h[:, None] * e)) / (2 * h)
    scale = np.maximum(np.linalg.norm(gr, axis=1), np.max(np.abs(g.values)) / ell)
    worst = float(np.max(np.linalg.norm(fd - gr, axis=1) / scale))
    ok = worst <= 1e-4
    record(8, ok, f"extend_grad vs finite differences at 1000 points: max rel {worst:.2e}")
    assert ok


def test_criterion_9_poincare():
    rep = run(ExperimentConfig("poincare-check", d=1, count=13, seed=0))
    boxes = len(rep.rows)
    ok = rep.passed and boxes >= 100
    record(9, ok, f"{boxes} boxes; " + report_line(rep))
    assert ok, rep.summary()
