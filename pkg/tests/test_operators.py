import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracelab.dyadic import (Box, CubeIndex, inflated_whitney, locate_many, selected_ancestor,
                             selected_level)
from tracelab.errors import DomainError, InvalidParams
from tracelab.field import (CounterexampleParams, bump_cutoff_field, constant_field,
                            counterexample_field, linear_field)
from tracelab.grid import BoundaryGridFunction, grid_average, random_grid
from tracelab.lab import support_relation_mismatches
from tracelab.norms import weighted_sobolev_norm
from tracelab.operators import (CONVERGING, DIVERGING, PartitionSpec, extend_eval, extend_grad,
                                extension_field, extension_sobolev_norm, partition_sum,
                                partition_value, raw_bump, trace_cells, trace_diagnostics,
                                trace_level)
from tracelab.weight import WeightParams


def whitney_center(Q):
    h = 2.0 ** -Q.level
    return np.array([(m + 0.5) * h for m in Q.index] + [1.5 * h])


# ---------------------------------------------------------------- bumps

def test_raw_bump_examples():
    Q = CubeIndex(3, (2,))
    h = 1 / 8
    assert raw_bump(Q, whitney_center(Q)) == 1.0
    assert raw_bump(Q, [3 * h, 1.5 * h]) == 1.0  # on a face of W(Q)
    assert raw_bump(Q, [3 * h + h / 8, 1.5 * h]) == pytest.approx(0.5, rel=1e-14)
    assert raw_bump(Q, [3 * h + h / 4 + 1e-12, 1.5 * h]) == 0.0
    assert raw_bump(Q, [2.5 * h, 0.7 * h]) == 0.0


def test_partition_spec_validation():
    with pytest.raises(InvalidParams):
        PartitionSpec(collar=0.3)
    with pytest.raises(InvalidParams):
        PartitionSpec(collar=0.0)


def test_partition_value_examples():
    Q = CubeIndex(4, (5,))
    assert partition_value(Q, whitney_center(Q)) == 1.0
    assert partition_value(Q, [0.9, 0.5]) == 0.0
    with pytest.raises(DomainError):
        partition_value(Q, [0.3, 0.0])


@pytest.mark.parametrize("d", [1, 2])
def test_partition_of_unity(d):
    rng = np.random.default_rng(d)
    n = 10_000
    pts = np.column_stack([rng.uniform(-2, 2, size=(n, d)), 1.0 - rng.random(n)])
    assert np.max(np.abs(partition_sum(pts) - 1.0)) < 1e-12
    deep = np.column_stack([rng.uniform(-2, 2, size=(n, d)), 2.0 ** -rng.uniform(0, 30, n)])
    assert np.max(np.abs(partition_sum(deep) - 1.0)) < 1e-12


def test_partition_terms_sum_individually():
    rng = np.random.default_rng(3)
    for _ in range(50):
        y = np.array([rng.uniform(-1, 1), 2.0 ** -rng.uniform(0, 6)])
        k0 = int(np.floor(-np.log2(y[1]))) + 1
        total = 0.0
        for k in range(max(k0 - 2, 1), k0 + 3):
            m0 = int(np.ceil(y[0] * 2 ** k)) - 1
            for m in range(m0 - 2, m0 + 3):
                total += partition_value(CubeIndex(k, (m,)), y)
        assert total == pytest.approx(1.0, abs=1e-12)


def max_difference_quotient(d, seed, n=4000):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        k = int(rng.integers(1, 7))
        ell = 2.0 ** -k
        Q = CubeIndex(k, tuple(int(v) for v in rng.integers(-3, 3, size=d)))
        y = whitney_center(Q) + rng.uniform(-0.9, 0.9, size=d + 1) * ell
        e = rng.normal(size=d + 1)
        z = y + 1e-4 * ell * e / np.linalg.norm(e)
        if z[-1] <= 0 or y[-1] <= 0:
            continue
        q = abs(partition_value(Q, z) - partition_value(Q, y)) / np.linalg.norm(z - y)
        worst = max(worst, q * ell)
    return worst


@pytest.mark.parametrize("d", [1, 2])
def test_lipschitz_bound(d):
    # children of Q fade across its plateau with slope 8/l each; 2^d of them stack
    assert max_difference_quotient(d, seed=5 + d) <= 8 * 2 ** d * (1 + 1e-6)


def test_eight_over_l_is_exceeded_by_the_construction():
    # under Q's plateau the two children bumps fade in t together, so
    # d psi_Q / dt = 16/l / S**2 with S close to 1
    Q = CubeIndex(2, (0,))
    ell = 0.25
    y = np.array([0.5 * ell, 1.12 * ell])
    h = 1e-7
    q = (partition_value(Q, y + [0, h]) - partition_value(Q, y)) / h
    assert q * ell == pytest.approx(16 / 1.08 ** 2, rel=1e-5)
    assert q * ell > 8


def test_support_relation():
    assert support_relation_mismatches(6) == 0


# ---------------------------------------------------------------- trace

def test_trace_examples():
    region = Box((-1.0,), (1.0,))
    T = trace_level(constant_field(2.0, 2), 3, region)
    assert np.allclose(T.values, 2.0, rtol=1e-14)
    assert len(T) == 16
    t_field = linear_field([0.0, 1.0], Box((-5, 0), (5, 5)))
    T = trace_level(t_field, 2, Box((0.0,), (0.25,)))
    assert T.values.tolist() == pytest.approx([3 / 8], rel=1e-14)
    lo, hi = inflated_whitney(CubeIndex(2, (0,))).lo[-1], inflated_whitney(CubeIndex(2, (0,))).hi[-1]
    assert (lo, hi) == (3 / 16, 9 / 16)


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 8))
def test_trace_linearity(a, b, k):
    f = bump_cutoff_field(1, 0.5)
    g = counterexample_field(CounterexampleParams(1, -1, 0))
    region = Box((-1.0,), (1.0,))
    lhs = trace_level(f.scaled(a) + g.scaled(b), k, region).values
    rhs = a * trace_level(f, k, region).values + b * trace_level(g, k, region).values
    assert np.allclose(lhs, rhs, rtol=1e-7, atol=1e-9)


def test_counterexample_trace_grows():
    u = counterexample_field(CounterexampleParams(1, -1, 0))
    prev = -math.inf
    for k in range(6, 17):
        v = trace_cells(u, k, np.array([[-1], [0]])).values
        # x' = 0 is the shared corner; both adjacent cubes see the same plateau
        assert v[0] == pytest.approx(v[1], rel=1e-12)
        assert v[1] >= 0.4 * math.log(1 + k * math.log(2))
        assert v[1] > prev
        prev = v[1]


def test_trace_diagnostics_constant():
    diag = trace_diagnostics(constant_field(1.5, 2), 6, 1, Box((-1.0,), (1.0,)))
    assert all(c == pytest.approx(0.0, abs=1e-13) for c in diag.cauchy_lp)
    assert diag.verdict == CONVERGING
    assert not diag.flagged


def test_trace_diagnostics_smooth_geometric():
    f = bump_cutoff_field(1, 0.0)
    diag = trace_diagnostics(f, 10, 1, Box((-2.0,), (2.0,)))
    c = diag.cauchy_lp
    rates = [c[k + 1] / c[k] for k in range(3, 9)]
    assert all(0.3 < r < 0.7 for r in rates)


def test_trace_diagnostics_counterexample():
    u = counterexample_field(CounterexampleParams(1, -1, 0))
    diag = trace_diagnostics(u, 12, 1, Box((-0.5,), (0.5,)), probes=[0.0])
    assert diag.verdict == DIVERGING
    series = diag.pointwise_probe[0][1]
    assert series[-1] > series[6] > series[2]


# ---------------------------------------------------------------- extension

def test_extension_of_constant():
    g = BoundaryGridFunction(2, np.arange(-40, 40)[:, None], np.full(80, 3.0))
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(-5, 5, 500), 2.0 ** -rng.uniform(0, 12, 500)])
    assert np.allclose(extend_eval(g, pts), 3.0, rtol=1e-14)
    assert np.allclose(extend_grad(g, pts), 0.0, atol=1e-9)


def test_extension_deep_in_whitney_box():
    # past every collar: finer collars end at 1.125 l, coarser ones start at 1.5 l
    rng = np.random.default_rng(1)
    g = random_grid(rng, 4, 1, Box((-1.0,), (1.0,)))
    for k in (1, 3, 6, 9):
        for m in (-3, 0, 5):
            Q = CubeIndex(k, (m,))
            y = whitney_center(Q) - [0.0, 0.2 * 2.0 ** -k]
            assert extend_eval(g, y) == grid_average(g, selected_ancestor(Q))
            assert np.all(extend_grad(g, y) == 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
def test_extension_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    g, h = random_grid(rng, 3, 1), random_grid(rng, 2, 1)
    pts = np.column_stack([rng.uniform(-1, 2, 100), 2.0 ** -rng.uniform(0, 10, 100)])
    lhs = extend_eval(a * g + b * h, pts)
    rhs = a * extend_eval(g, pts) + b * extend_eval(h, pts)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def off_kink_points(rng, n, d, gap):
    """Points whose coordinates keep a relative distance ``gap`` from every collar kink."""
    out = []
    while len(out) < n:
        y = np.concatenate([rng.uniform(-0.5, 1.5, d), [2.0 ** -rng.uniform(0, 10)]])
        k0 = int(math.floor(-math.log2(y[-1]))) + 1
        ok = True
        for k in (k0 - 1, k0, k0 + 1):
            ell = 2.0 ** -k
            for x in y[:-1]:
                r = (x / (ell / 4)) % 1.0
                ok &= min(r, 1 - r) * ell / 4 > gap * ell
            for c in (0.75, 1.0, 2.0, 2.25):
                ok &= abs(y[-1] - c * ell) > gap * ell
        if ok:
            out.append(y)
    return np.array(out)


@pytest.mark.parametrize("d", [1, 2])
def test_extend_grad_matches_finite_differences(d):
    rng = np.random.default_rng(20 + d)
    g = random_grid(rng, 3, d)
    pts = off_kink_points(rng, 1000, d, 1e-3)
    gr = extend_grad(g, pts)
    ell = 2.0 ** -(np.floor(-np.log2(pts[:, -1])) + 1)
    fd = np.empty_like(gr)
    for a in range(d + 1):
        e = np.zeros(d + 1)
        e[a] = 1.0
        h = (ell / 1e4)[:, None]
        fd[:, a] = (extend_eval(g, pts + h * e) - extend_eval(g, pts - h * e)) / (2 * h[:, 0])
    scale = np.maximum(np.linalg.norm(gr, axis=1), np.max(np.abs(g.values)) / ell)
    assert np.max(np.linalg.norm(fd - gr, axis=1) / scale) < 1e-4


def test_extension_locality():
    # coefficients come from selected ancestors, so the reach is 3 edges of the
    # coarsest selected ancestor among the cubes whose bumps touch y
    rng = np.random.default_rng(4)
    g = random_grid(rng, 5, 1, Box((-2.0,), (2.0,)))
    checked = 0
    for _ in range(60):
        y = np.array([rng.uniform(-1, 1), 2.0 ** -rng.uniform(0, 5)])
        k0 = math.floor(-math.log2(y[1])) + 1
        reach = 3 * 2.0 ** -selected_level(max(k0 - 1, 1))
        far = np.abs((g.idx[:, 0] + 0.5) * 2.0 ** -5 - y[0]) > reach + 2.0 ** -5
        if not far.any():
            continue
        vals = g.values.copy()
        vals[far] = rng.normal(size=far.sum()) * 100
        h = BoundaryGridFunction(g.level, g.idx, vals)
        assert extend_eval(h, y) == extend_eval(g, y)
        checked += 1
    assert checked > 20


def test_extension_norm_matches_direct_quadrature():
    # |grad Eg| is not polynomial, so both routes converge; the direct rule
    # ignores the collar kinks and needs fine t-cells to get close
    g = random_grid(np.random.default_rng(8), 2, 1)
    wp = WeightParams.borderline(1, 1)
    direct = weighted_sobolev_norm(extension_field(g), wp, eps=2.0 ** -4, T=2.0,
                                   resolution=512, order=6, t_cells=8, tail=False)
    refined = extension_sobolev_norm(g, wp, eps=2.0 ** -4, sub=16, order=8)
    assert refined.total == pytest.approx(direct.total, rel=1e-4)
    assert refined.l_p_part == pytest.approx(direct.l_p_part, rel=1e-4)
    assert extension_sobolev_norm(g, wp, eps=2.0 ** -4).total == pytest.approx(direct.total, rel=1e-3)


@pytest.mark.parametrize("L", [1, 2, 3])
def test_retraction(L):
    rng = np.random.default_rng(L)
    g = random_grid(rng, L, 1)
    centers = (g.idx + 0.5) * 2.0 ** -L
    Eg = extension_field(g)
    for k in range(L + 3, 12):
        cubes = locate_many(centers, k)
        T = trace_cells(Eg, k, cubes)
        assert np.max(np.abs(T.lookup(k, cubes) - g.values)) <= 1e-6
