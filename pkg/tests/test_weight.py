import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import power_log_riemann
from tracelab.dyadic import Box, CubeIndex, inflated_whitney, whitney_box
from tracelab.errors import DomainError, InvalidParams
from tracelab.weight import (A1, A1_FAILS, BLOWUP, BOUNDED, DUAL_DIVERGES, LOG4, WeightParams,
                             ap_ratio, ap_scan, classify, fit_growth_exponent, in_gamma, mu_measure,
                             omega, power_log_integral, power_log_integral_closed, vertical_integral)


def test_params_validation():
    with pytest.raises(InvalidParams):
        WeightParams(0.5, 0, 0)
    with pytest.raises(InvalidParams):
        WeightParams(2, -1, 0)
    with pytest.raises(InvalidParams):
        WeightParams(2, 1.5, 0)
    with pytest.raises(InvalidParams):
        WeightParams(2, 1, 0, dim=4)
    assert WeightParams.borderline(3, 1).alpha == 2


@pytest.mark.parametrize("p,lam,want", [(2, 1.5, True), (2, 1, False), (1, 0, True), (1, -0.1, False),
                                        (3, 2.0001, True)])
def test_gamma_region(p, lam, want):
    assert in_gamma(p, lam) is want


def test_omega_examples():
    for lam in (-2, 0, 1.5, 3):
        assert omega(1.0, WeightParams(2, 0.3, lam)) == pytest.approx(LOG4 ** lam, rel=1e-15)
    assert omega(2.0, WeightParams(2, 1, 3)) == pytest.approx(LOG4 ** 3)
    assert omega(0.25, WeightParams(1, 0, 1)) == pytest.approx(math.log(16), rel=1e-15)
    with pytest.raises(DomainError):
        omega(0.0, WeightParams(1, 0, 1))


def test_vertical_integral_examples():
    assert vertical_integral(0.25, 0.5, WeightParams(2, 1, 0)) == pytest.approx(0.09375, rel=1e-14)
    assert vertical_integral(1, 3, WeightParams(2, 1, 3)) == pytest.approx(2.0, rel=1e-14)
    with pytest.raises(DomainError):
        vertical_integral(0.5, 0.5, WeightParams(2, 1, 0))
    with pytest.raises(DomainError):
        vertical_integral(-0.1, 0.5, WeightParams(2, 1, 0))


def test_vertical_integral_growth_in_k():
    # int_0^{2^-k} t^{p-1} log^lam(4/t) dt ~ c 2^{-kp} (k+2)^lam
    p, lam = 2, 3
    wp = WeightParams.borderline(p, lam)
    ks = np.arange(8, 17)
    vals = [vertical_integral(0, 2.0 ** -k, wp) * 2.0 ** (k * p) for k in ks]
    assert fit_growth_exponent(ks, vals) == pytest.approx(lam, rel=0.05)


def test_mu_measure_examples():
    wp = WeightParams(2, 1, 0)
    assert mu_measure(whitney_box(CubeIndex(2, (0,))), wp) == pytest.approx(0.0234375, rel=1e-14)
    assert mu_measure(Box((0, 1), (1, 2)), WeightParams(2, 1, 3)) == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(DomainError):
        mu_measure(Box((0, -0.1), (1, 1)), wp)


def test_mu_ratio_of_inflated_box():
    wp = WeightParams(2, 1, 2)
    Q = CubeIndex(12, (3,))
    ratio = mu_measure(inflated_whitney(Q), wp) / mu_measure(whitney_box(Q), wp)
    lebesgue = inflated_whitney(Q).volume / whitney_box(Q).volume
    assert ratio == pytest.approx(lebesgue, rel=0.03)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 0.9), st.floats(0.01, 1.0), st.floats(-0.9, 3.0), st.integers(0, 1))
def test_quadrature_matches_closed_form(a, width, beta, n):
    b = min(a + width, 1.0)
    if not b > a:
        return
    assert power_log_integral(a, b, beta, n) == pytest.approx(
        power_log_integral_closed(a, b, beta, n), rel=1e-10)


def test_quadrature_matches_riemann_oracle():
    for a, b, beta, gam in [(1e-6, 0.5, 1.0, 2.5), (1e-3, 1.0, -0.5, -1.5), (0.2, 0.3, 0.0, 3.0)]:
        assert power_log_integral(a, b, beta, gam) == pytest.approx(
            power_log_riemann(a, b, beta, gam), rel=1e-8)


def test_divergent_integrals():
    assert math.isinf(power_log_integral(0, 0.5, -1, 0))
    assert math.isinf(power_log_integral(0, 0.5, -1.5, 2))
    assert math.isfinite(power_log_integral(0, 0.5, -1, -2))


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(0.05, 2.0), st.floats(0.05, 2.0))
def test_mu_additivity(a, w1, w2):
    wp = WeightParams(2, 1, 2.5)
    b, c = a + w1, a + w1 + w2
    whole = mu_measure(Box((0, a), (1, c)), wp)
    parts = mu_measure(Box((0, a), (1, b)), wp) + mu_measure(Box((0, b), (1, c)), wp)
    assert whole == pytest.approx(parts, rel=1e-10)


def test_doubling():
    rng = np.random.default_rng(0)
    wp = WeightParams.borderline(2, 3)
    worst = 0.0
    for _ in range(300):
        t = 2.0 ** rng.uniform(-12, 2)
        r = t * 2.0 ** rng.uniform(-3, 3)
        small = mu_measure(Box((-r, max(t - r, 0.0)), (r, t + r)), wp)
        big = mu_measure(Box((-2 * r, max(t - 2 * r, 0.0)), (2 * r, t + 2 * r)), wp)
        worst = max(worst, big / small)
    assert worst < 16


def test_ap_scan_examples():
    bounded = ap_scan(WeightParams(2, 0.5, 2), 12)
    ratios = [r.ratio for r in bounded.rows]
    assert all(math.isfinite(r) for r in ratios)
    assert max(ratios) / min(ratios) <= 20
    assert abs(bounded.fitted_exponent) <= 0.1
    blow = ap_scan(WeightParams(2, 1, 3), 12)
    assert blow.fitted_exponent == pytest.approx(1.0, abs=0.1)
    assert blow.verdict == BLOWUP
    fails = ap_scan(WeightParams(1, 0, -1), 5)
    assert fails.verdict == A1_FAILS
    assert all(r.right_factor == 0 for r in fails.rows)


def test_ap_ratio_dual_divergence():
    wp = WeightParams(2, 1, 1)
    assert math.isinf(ap_ratio(Box((0, 0), (0.25, 0.25)), wp))
    assert math.isfinite(ap_ratio(Box((0, 0.01), (0.25, 0.25)), wp))


def test_a1_bounded_off_boundary():
    rng = np.random.default_rng(1)
    wp = WeightParams(1, 0, 1.5)
    vals = []
    for _ in range(200):
        t, h = 2.0 ** rng.uniform(-15, 2), 2.0 ** rng.uniform(-15, 2)
        vals.append(ap_ratio(Box((0, t), (h, t + h)), wp))
    assert max(vals) < 10


def test_blowup_eventually_increasing():
    rows = ap_scan(WeightParams(2, 1, 3), 12).rows
    tail = [r.ratio for r in rows[4:]]
    assert all(b > a for a, b in zip(tail, tail[1:]))


@pytest.mark.parametrize("wp,verdict", [
    (WeightParams(2, 0.5, -2), BOUNDED), (WeightParams(2, 1, 3), BLOWUP),
    (WeightParams(2, 1, 1), DUAL_DIVERGES), (WeightParams(1, 0, 0), A1), (WeightParams(1, 0, -1), A1_FAILS)])
def test_classify(wp, verdict):
    assert classify(wp) == verdict


@settings(max_examples=50, deadline=None)
@given(st.one_of(st.just(1.0), st.floats(1.1, 4.0)), st.floats(-0.9, 1.0), st.floats(-3, 3),
       st.integers(0, 14), st.floats(0, 2))
def test_ap_ratio_at_least_one(p, afrac, lam, k, t0):
    alpha = min(afrac, 1.0) * (p - 1) if afrac > 0 else afrac
    if alpha <= -1:
        return
    wp = WeightParams(p, alpha, lam)
    h = 2.0 ** -k
    assert ap_ratio(Box((0, t0), (h, t0 + h)), wp) >= 1 - 1e-9
