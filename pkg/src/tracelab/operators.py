"""Trace averages, the Whitney partition of unity and the selected extension.

Partition of unity: each cube Q of level >= 1 gets a raw bump, the tensor
product of trapezoids that equal 1 on the Whitney box W(Q) and fall linearly
to 0 across a collar of width ``collar * l(Q)``.  The normalized bump is
``b_Q / max(S, 1)`` with ``S`` the sum of all raw bumps at the point.  The
sum is >= 1 wherever some plateau contains the point, which covers heights
(0, 1]; above that the clamp keeps every psi_Q Lipschitz as the bumps fade.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dyadic import (Box, CubeIndex, level_index_grid, locate_many, selected_level,
                     whitney_level)
from .errors import DomainError, InvalidParams, LevelError
from .field import ScalarField, _tensor_unit_rule, box_averages
from .grid import BoundaryGridFunction, encode
from .norms import NormBreakdown, boundary_lp_norm
from .weight import WeightParams, omega, vertical_integral


@dataclass(frozen=True)
class PartitionSpec:
    collar: float = 0.25
    normalize: bool = True

    def __post_init__(self):
        if not 0 < self.collar <= 0.25:
            raise InvalidParams(f"collar must lie in (0, 1/4], got {self.collar}")


DEFAULT_SPEC = PartitionSpec()


# ---------------------------------------------------------------- bumps

def _profile(s, lo, hi, w):
    """Trapezoid value and one-sided (from above) derivative along one axis."""
    val = np.clip(1.0 + np.minimum(s - lo, hi - s) / w, 0.0, 1.0)
    der = np.where((s >= lo - w) & (s < lo), 1.0 / w, 0.0) - np.where((s >= hi) & (s < hi + w), 1.0 / w, 0.0)
    return val, der


def _bumps(pts: np.ndarray, levels: np.ndarray, idx: np.ndarray, collar: float, grad: bool):
    """Raw bumps b (n, C) and optionally their gradients (n, C, d+1).

    ``levels`` is (n, C) and ``idx`` is (n, C, d).
    """
    d = idx.shape[-1]
    ell = np.ldexp(1.0, -levels)
    w = collar * ell
    vals, ders = [], []
    for i in range(d):
        lo = idx[..., i] * ell
        v, dv = _profile(pts[:, None, i], lo, lo + ell, w)
        vals.append(v)
        ders.append(dv)
    v, dv = _profile(pts[:, None, d], ell, 2 * ell, w)
    vals.append(v)
    ders.append(dv)
    vals = np.stack(vals, axis=-1)
    b = np.prod(vals, axis=-1)
    if not grad:
        return b, None
    db = np.empty(b.shape + (d + 1,))
    for a in range(d + 1):
        others = np.prod(np.delete(vals, a, axis=-1), axis=-1)
        db[..., a] = np.stack(ders, axis=-1)[..., a] * others
    return b, db


def _candidates(pts: np.ndarray):
    """Every cube of level >= 1 whose raw bump can be positive at each point."""
    n, dim = pts.shape
    d = dim - 1
    t = pts[:, -1]
    if np.any(t <= 0):
        raise DomainError("points must have t > 0")
    k0 = whitney_level(t)
    levels = k0[:, None] + np.array([-1, 0, 1])
    offs = np.array(list(itertools.product((-1, 0, 1), repeat=d)), dtype=np.int64)
    base = np.ceil(np.ldexp(pts[:, None, :d], levels[:, :, None])).astype(np.int64) - 1
    idx = (base[:, :, None, :] + offs[None, None]).reshape(n, -1, d)
    lev = np.repeat(levels, len(offs), axis=1)
    return lev, idx, lev >= 1


def partition_terms(pts, spec: PartitionSpec = DEFAULT_SPEC, grad: bool = False):
    """Candidate cubes, raw bumps and normalizer at each point (vectorized)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    lev, idx, valid = _candidates(pts)
    b, db = _bumps(pts, np.maximum(lev, 0), idx, spec.collar, grad)
    b = np.where(valid, b, 0.0)
    if db is not None:
        db = np.where(valid[..., None], db, 0.0)
    S = b.sum(axis=1)
    return lev, idx, b, db, S


def raw_bump(Q: CubeIndex, y, spec: PartitionSpec = DEFAULT_SPEC) -> float:
    y = np.asarray(y, dtype=float).reshape(1, -1)
    if y.shape[1] != Q.dim + 1:
        raise DomainError("point dimension must be cube dimension + 1")
    b, _ = _bumps(y, np.array([[Q.level]]), np.array([[Q.index]], dtype=np.int64), spec.collar, False)
    return float(b[0, 0])


def partition_value(Q: CubeIndex, y, spec: PartitionSpec = DEFAULT_SPEC) -> float:
    """psi_Q(y)."""
    if Q.level < 1:
        raise DomainError("partition cubes have level >= 1")
    y = np.asarray(y, dtype=float).reshape(1, -1)
    lev, idx, b, _, S = partition_terms(y, spec)
    own = raw_bump(Q, y[0], spec)
    if own == 0.0:
        return 0.0
    return own / max(float(S[0]), 1.0)


def partition_sum(pts, spec: PartitionSpec = DEFAULT_SPEC) -> np.ndarray:
    """sum_Q psi_Q at each point."""
    _, _, b, _, S = partition_terms(pts, spec)
    return S / np.maximum(S, 1.0)


# ---------------------------------------------------------------- extension

def selected_coefficients(g: BoundaryGridFunction, lev: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """g averaged over the selected ancestor S(Q) for arrays of cubes (level >= 1)."""
    lev = np.asarray(lev)
    shape = lev.shape
    flat_lev = lev.ravel()
    flat_idx = np.asarray(idx).reshape(-1, g.dim)
    out = np.zeros(len(flat_lev))
    ok = flat_lev >= 1
    sel = np.zeros_like(flat_lev)
    _, ex = np.frexp(np.where(ok, flat_lev, 1).astype(float))
    sel[ok] = (1 << (ex[ok] - 1).astype(np.int64))
    for K in np.unique(sel[ok]):
        mask = ok & (sel == K)
        shift = (flat_lev[mask] - K)[:, None]
        out[mask] = g.lookup(int(K), flat_idx[mask] >> shift)
    return out.reshape(shape)


def _extend(g: BoundaryGridFunction, pts: np.ndarray, spec: PartitionSpec, grad: bool):
    lev, idx, b, db, S = partition_terms(pts, spec, grad)
    c = selected_coefficients(g, lev, idx)
    D = np.maximum(S, 1.0)
    num = (c * b).sum(axis=1)
    val = num / D
    if not grad:
        return val, None
    dnum = (c[..., None] * db).sum(axis=1)
    dS = db.sum(axis=1)
    big = (S > 1.0)[:, None]
    gr = np.where(big, dnum / D[:, None] - (num / D ** 2)[:, None] * dS, dnum)
    return val, gr


def _check_dim(g: BoundaryGridFunction, pts: np.ndarray):
    if pts.shape[1] != g.dim + 1:
        raise DomainError(f"points must have dimension {g.dim + 1}")


def extend_eval(g: BoundaryGridFunction, y, spec: PartitionSpec = DEFAULT_SPEC):
    """(E g)(y); scalar for one point, array for rows of points."""
    pts = np.atleast_2d(np.asarray(y, dtype=float))
    _check_dim(g, pts)
    val, _ = _extend(g, pts, spec, False)
    return float(val[0]) if np.ndim(y) == 1 else val


def extend_grad(g: BoundaryGridFunction, y, spec: PartitionSpec = DEFAULT_SPEC):
    """Gradient of E g, one-sided from above on the kink hyperplanes."""
    pts = np.atleast_2d(np.asarray(y, dtype=float))
    _check_dim(g, pts)
    _, gr = _extend(g, pts, spec, True)
    return gr[0] if np.ndim(y) == 1 else gr


def extension_field(g: BoundaryGridFunction, spec: PartitionSpec = DEFAULT_SPEC) -> ScalarField:
    sup = g.support.inflate(1.0)
    return ScalarField(
        g.dim + 1,
        lambda p: _extend(g, p, spec, False)[0],
        sup.cross(0.0, 1.25),
        lambda p: _extend(g, p, spec, True)[1],
        f"extension({g!r})",
    )


# ---------------------------------------------------------------- trace

def neighborhood_boxes(level: int, idx: np.ndarray):
    """Corners of N(Q) = W(Q) inflated by l(Q)/4, for index rows at one level."""
    h = math.ldexp(1.0, -level)
    lo = np.concatenate([idx * h - h / 4, np.full((len(idx), 1), 0.75 * h)], axis=1)
    hi = np.concatenate([(idx + 1) * h + h / 4, np.full((len(idx), 1), 2.25 * h)], axis=1)
    return lo, hi


def trace_cells(f: ScalarField, k: int, idx: np.ndarray, order: int = 4) -> BoundaryGridFunction:
    """T_k f on the given level-k cubes."""
    idx = np.asarray(idx, dtype=np.int64).reshape(-1, f.dim - 1)
    lo, hi = neighborhood_boxes(k, idx)
    res = box_averages(f, lo, hi, None, order)
    return BoundaryGridFunction(k, idx, res.values, ~res.converged, dim=f.dim - 1)


def trace_level(f: ScalarField, k: int, region: Box, order: int = 4) -> BoundaryGridFunction:
    """Level-k trace average: mean of f over N(Q) for each cube meeting ``region``."""
    if k < 0:
        raise InvalidParams("k must be >= 0")
    return trace_cells(f, k, level_index_grid(k, region), order)


CONVERGING = "converging"
DIVERGING = "diverging"
INCONCLUSIVE = "inconclusive"


@dataclass
class TraceDiagnostics:
    levels: list
    cauchy_lp: list
    pointwise_probe: list
    verdict: str
    traces: list = field(default_factory=list, repr=False)

    @property
    def flagged(self) -> bool:
        return any(t.any_flagged for t in self.traces)


def trace_verdict(cauchy: Sequence[float], t0_norm: float, probes: Sequence[Sequence[float]]) -> str:
    """Report-only label from the Cauchy tail and the probe growth."""
    half = len(cauchy) // 2
    if math.fsum(cauchy[half:]) < 1e-3 * t0_norm:
        return CONVERGING
    if probes and len(probes[0]) >= 8:
        n = len(probes[0]) - 1
        for series in probes:
            if all(series[k] > 1.1 * series[k // 2] and series[k] > 0 for k in range(n - 3, n + 1)):
                return DIVERGING
    return INCONCLUSIVE


def trace_diagnostics(f: ScalarField, k_max: int, p: float, region: Box,
                      probes: Optional[Sequence] = None, order: int = 4) -> TraceDiagnostics:
    if k_max < 1:
        raise InvalidParams("k_max must be >= 1")
    d = f.dim - 1
    probes = [np.asarray(region.center)] if probes is None else [np.atleast_1d(np.asarray(x, float)) for x in probes]
    traces = [trace_level(f, k, region, order) for k in range(k_max + 1)]
    cauchy = [boundary_lp_norm(traces[k + 1] - traces[k], p) for k in range(k_max)]
    table = []
    series = []
    for x in probes:
        vals = [float(T.eval_points(x.reshape(1, d))[0]) for T in traces]
        series.append(vals)
        table.append((tuple(x), vals))
    verdict = trace_verdict(cauchy, boundary_lp_norm(traces[0], p), series)
    return TraceDiagnostics(list(range(k_max + 1)), cauchy, table, verdict, traces)


# ---------------------------------------------------------------- Sobolev norm of E g

def _whitney_candidates(k: int, P: np.ndarray):
    """Cubes at levels k-1..k+1 (>= 1) whose bumps may reach W(P), P at level k."""
    d = P.shape[1]
    groups = []
    off3 = np.array(list(itertools.product((-1, 0, 1), repeat=d)), dtype=np.int64)
    off4 = np.array(list(itertools.product((-1, 0, 1, 2), repeat=d)), dtype=np.int64)
    if k >= 1:
        groups.append((k, P[:, None, :] + off3[None]))
    groups.append((k + 1, 2 * P[:, None, :] + off4[None]))
    if k - 1 >= 1:
        groups.append((k - 1, (P >> 1)[:, None, :] + off3[None]))
    return groups


def _quadrature_boxes(g: BoundaryGridFunction, k: int, P: np.ndarray, wp: WeightParams,
                      spec: PartitionSpec, order: int, sub: int):
    """Sums of |Eg|^p and |grad Eg|^p against mu over W(P) for each P row."""
    d = g.dim
    h = math.ldexp(1.0, -k)
    upts, uw = _tensor_unit_rule(d + 1, order, sub)
    lp_tot, gr_tot = [], []
    step = max(1, (1 << 18) // len(uw))
    for s in range(0, len(P), step):
        blk = P[s:s + step]
        lo = np.concatenate([blk * h, np.full((len(blk), 1), h)], axis=1)
        pts = (lo[:, None, :] + h * upts[None]).reshape(-1, d + 1)
        w = np.tile(uw, len(blk)) * h ** (d + 1) * omega(pts[:, -1], wp) / wp.normalization
        val, gr = _extend(g, pts, spec, True)
        lp_tot.append(math.fsum(w * np.abs(val) ** wp.p))
        gr_tot.append(math.fsum(w * np.linalg.norm(gr, axis=1) ** wp.p))
    return math.fsum(lp_tot), math.fsum(gr_tot)


def _shell(n: int, d: int, lo_band: int, hi_band: int) -> np.ndarray:
    """Local indices r in [0, n)^d with some axis outside [lo_band, n - hi_band)."""
    full = np.arange(n)
    band = np.unique(np.concatenate([full[:lo_band], full[max(n - hi_band, 0):]]))
    parts = []
    for a in range(d):
        axes = [full] * d
        axes[a] = band
        mesh = np.meshgrid(*axes, indexing="ij")
        parts.append(np.stack([m.ravel() for m in mesh], axis=1))
    rows = np.concatenate(parts)
    return np.unique(rows, axis=0)


def _level_contribution(g: BoundaryGridFunction, k: int, wp: WeightParams, spec: PartitionSpec,
                        order: int, sub: int, hbox: Box):
    d, L, p = g.dim, g.level, wp.p
    Vk = vertical_integral(math.ldexp(1.0, -k), math.ldexp(1.0, 1 - k), wp)
    vol = math.ldexp(1.0, -k * d)
    analytic = 0.0
    if k - L >= 2 and selected_level(k - 1) >= L and len(g):
        # every candidate's selected ancestor sits inside one level-L cell, so
        # W(P) is inactive unless the candidates reach into another cell
        n = 1 << (k - L)
        cells = np.unique(np.concatenate([g.idx + np.array(o) for o in
                                          itertools.product((-1, 0, 1), repeat=d)]), axis=0)
        core = max(n - 6, 0) ** d
        analytic = math.fsum(np.abs(g.lookup(L, cells)) ** p) * core * vol * Vk
        local = _shell(n, d, 3, 3)
        P = (cells[:, None, :] * n + local[None]).reshape(-1, d)
    else:
        P = level_index_grid(k, hbox)
    if len(P) == 0:
        return analytic, 0.0
    coeffs = [selected_coefficients(g, np.full(idx.shape[:2], lev), idx)
              for lev, idx in _whitney_candidates(k, P)]
    c = np.concatenate(coeffs, axis=1)
    if k == 0:
        active = np.any(c != 0, axis=1)
    else:
        active = np.any(c != c[:, :1], axis=1)
    inactive = ~active
    lp = analytic + math.fsum(np.abs(c[inactive, 0]) ** p) * vol * Vk
    gr = 0.0
    if np.any(active):
        a_lp, a_gr = _quadrature_boxes(g, k, P[active], wp, spec, order, sub)
        lp += a_lp
        gr += a_gr
    return lp, gr


def extension_sobolev_norm(g: BoundaryGridFunction, wp: WeightParams,
                           spec: PartitionSpec = DEFAULT_SPEC, eps: float = 2.0 ** -16,
                           order: int = 4, sub: int = 8) -> NormBreakdown:
    """||E g||_{W^{1,p}(mu)} over heights (2^-K, 2], K = ceil(log2(1/eps)).

    Whitney boxes on which E g is constant are summed in closed form; the
    rest are integrated on ``sub``^(d+1) sub-cells aligned with the collar
    kinks.  ``per_layer`` lists (Whitney level, contribution to the p-th
    powers) and ``tail_estimate`` the change from one more level.
    """
    if g.dim != wp.dim:
        raise DomainError("weight dimension does not match the grid")
    K = max(1, math.ceil(-math.log2(eps)))
    hbox = g.support.inflate(1.0)
    rows = [(k,) + _level_contribution(g, k, wp, spec, order, sub, hbox) for k in range(K + 2)]
    p = wp.p
    lp = math.fsum(r[1] for r in rows[:-1])
    gr = math.fsum(r[2] for r in rows[:-1])
    total = lp ** (1 / p) + gr ** (1 / p)
    lp2, gr2 = lp + rows[-1][1], gr + rows[-1][2]
    return NormBreakdown(total=total, per_layer=[(k, a + b) for k, a, b in rows[:-1]],
                         tail_estimate=lp2 ** (1 / p) + gr2 ** (1 / p) - total,
                         l_p_part=lp ** (1 / p), grad_part=gr ** (1 / p))
