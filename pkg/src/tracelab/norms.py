"""Weighted Sobolev norms, the selected-layer Besov norm and boundary L^p norms."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dyadic import MAX_LAYER, Box, layer_level
from .errors import InvalidParams, LevelError, LevelOutOfRange, MissingGradient
from .field import ScalarField, _tensor_unit_rule, gauss_rule
from .grid import BoundaryGridFunction, decode, encode
from .weight import WeightParams, omega


@dataclass(frozen=True)
class BesovParams:
    p: float
    lam: float
    j_max: int

    def __post_init__(self):
        if not self.p >= 1:
            raise InvalidParams(f"p must be >= 1, got {self.p}")
        if self.j_max < 0:
            raise InvalidParams("j_max must be >= 0")
        if self.j_max > MAX_LAYER:
            raise LevelOutOfRange(f"j_max={self.j_max} exceeds the layer cap {MAX_LAYER}")


@dataclass
class NormBreakdown:
    total: float
    per_layer: list = field(default_factory=list)
    tail_estimate: float = 0.0
    l_p_part: Optional[float] = None
    grad_part: Optional[float] = None
    flagged: bool = False

    def last_layer_share(self) -> float:
        tot = math.fsum(v for _, v in self.per_layer)
        return self.per_layer[-1][1] / tot if tot > 0 else 0.0

    def to_json(self) -> str:
        out = {"total": self.total}
        if self.l_p_part is not None:
            out["l_p_part"] = self.l_p_part
        out["per_layer"] = [[j, v] for j, v in self.per_layer]
        out["tail_estimate"] = self.tail_estimate
        return json.dumps(out)


# ------------------------------------------------------------------ boundary

def boundary_lp_norm(g: BoundaryGridFunction, p: float) -> float:
    if p < 1:
        raise InvalidParams("p must be >= 1")
    return math.fsum(g.cell_volume * np.abs(g.values) ** p) ** (1.0 / p)


def _dilate(idx: np.ndarray) -> np.ndarray:
    d = idx.shape[1]
    offs = np.array(list(itertools.product((-1, 0, 1), repeat=d)), dtype=np.int64)
    return decode(np.unique(encode((idx[:, None, :] + offs[None]).reshape(-1, d))), d)


def layer_energy(g: BoundaryGridFunction, j: int, p: float) -> float:
    """sum_{Q in layer j} m_d(Q) sum_{Q' selected-adjacent} |g_Q - g_Q'|**p (unweighted)."""
    k = layer_level(j)
    kc = layer_level(j - 1)
    d = g.dim
    if len(g) == 0:
        return 0.0
    # every cube with a nonzero difference touches the support at level kc or k
    base = g.coarse_support(kc)
    if k > kc:
        s = 1 << (k - kc)
        offs = np.stack(np.meshgrid(*([np.arange(s)] * d), indexing="ij"), -1).reshape(-1, d)
        base = (base[:, None, :] * s + offs[None]).reshape(-1, d)
    cand = _dilate(base)
    gq = g.lookup(k, cand)
    terms = []
    for off in itertools.product((-1, 0, 1), repeat=d):
        if any(off):
            terms.append(np.abs(gq - g.lookup(k, cand + np.array(off))) ** p)
    if kc != k:
        s = 1 << (k - kc)
        lo = -((-cand) // s) - 1
        hi = (cand + 1) // s
        for bits in itertools.product((0, 1), repeat=d):
            b = np.array(bits, dtype=bool)
            idx = np.where(b, hi, lo)
            valid = np.all(~b | (hi != lo), axis=1)
            terms.append(np.where(valid, np.abs(gq - g.lookup(kc, idx)) ** p, 0.0))
    vol = math.ldexp(1.0, -k * d)
    return vol * math.fsum(np.concatenate(terms))


def besov_seminorm(g: BoundaryGridFunction, bp: BesovParams) -> NormBreakdown:
    """Weighted layer sums; ``total`` is the energy (p-th power of the seminorm).

    Layers finer than the grid are evaluated on the refined function, which is
    exact for piecewise-constant data.
    """
    per = [(j, (2.0 ** j + 2.0) ** bp.lam * layer_energy(g, j, bp.p)) for j in range(bp.j_max + 1)]
    total = math.fsum(v for _, v in per)
    return NormBreakdown(total=total, per_layer=per, flagged=g.any_flagged)


def besov_norm(g: BoundaryGridFunction, bp: BesovParams) -> NormBreakdown:
    """||g||_{L^p} + (layer energy)**(1/p)."""
    semi = besov_seminorm(g, bp)
    lp = boundary_lp_norm(g, bp.p)
    return NormBreakdown(total=lp + semi.total ** (1.0 / bp.p), per_layer=semi.per_layer,
                         l_p_part=lp, grad_part=semi.total ** (1.0 / bp.p), flagged=semi.flagged)


# ------------------------------------------------------------------ Sobolev

def _slab_edges(eps: float, T: float, t_lo: float, t_hi: float):
    """Dyadic height slabs (2^-k, 2^{1-k}] clipped to (max(eps,t_lo), min(T,t_hi)]."""
    a, b = max(eps, t_lo), min(T, t_hi)
    if not b > a:
        return []
    out = []
    k = 1 - math.ceil(math.log2(b))
    while True:
        lo, hi = math.ldexp(1.0, -k), math.ldexp(1.0, 1 - k)
        lo_c, hi_c = max(lo, a), min(hi, b)
        if hi_c > lo_c:
            out.append((k, lo_c, hi_c))
        if lo <= a:
            break
        k += 1
    return out


def _horizontal_rule(box: Box, resolution: int, order: int):
    """Composite rule on cells of width 1/resolution aligned to the lattice."""
    x, w = gauss_rule(order)
    axes, weights = [], []
    for a, b in zip(box.lo, box.hi):
        c0, c1 = math.floor(a * resolution), math.ceil(b * resolution)
        cells = np.arange(c0, c1)
        axes.append(((cells[:, None] + x[None]) / resolution).ravel())
        weights.append(np.tile(w, len(cells)) / resolution)
    mesh = np.meshgrid(*axes, indexing="ij")
    wmesh = np.meshgrid(*weights, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    wts = np.prod(np.stack([m.ravel() for m in wmesh], axis=1), axis=1)
    return pts, wts


def _sobolev_slabs(f: ScalarField, wp: WeightParams, slabs, resolution: int, order: int,
                   t_cells: int):
    hpts, hw = _horizontal_rule(f.support.horizontal(), resolution, order)
    tn, tw = gauss_rule(order + 2)
    rows = []
    for k, a, b in slabs:
        h = (b - a) / t_cells
        ts = (a + h * (np.arange(t_cells)[:, None] + tn[None])).ravel()
        twt = np.tile(tw, t_cells) * h * omega(ts, wp) / wp.normalization
        lp_acc, gr_acc = [], []
        step = max(1, (1 << 20) // len(hpts))
        for s in range(0, len(ts), step):
            tt = ts[s:s + step]
            pts = np.concatenate([np.repeat(hpts, len(tt), axis=0),
                                  np.tile(tt, len(hpts))[:, None]], axis=1)
            w = np.repeat(hw, len(tt)) * np.tile(twt[s:s + step], len(hpts))
            lp_acc.append(math.fsum(w * np.abs(f(pts)) ** wp.p))
            gn = np.linalg.norm(f.gradient(pts), axis=1)
            gr_acc.append(math.fsum(w * gn ** wp.p))
        rows.append((k, math.fsum(lp_acc), math.fsum(gr_acc)))
    return rows


def weighted_sobolev_norm(f: ScalarField, wp: WeightParams, eps: float = 2.0 ** -16,
                          T: float = 4.0, resolution: int = 64, order: int = 4,
                          t_cells: int = 1, tail: bool = True) -> NormBreakdown:
    """||f||_{L^p(mu)} + ||grad f||_{L^p(mu)} over the support cut to heights (eps, T].

    Heights are split into dyadic slabs, each integrated with Gauss-Legendre in
    t against the weight; ``per_layer`` holds (k, slab contribution to the sum
    of p-th powers).  ``tail_estimate`` is the change when eps is halved.
    """
    if not f.has_grad:
        raise MissingGradient(f"field {f.name!r} has no gradient")
    if not (eps > 0 and T > eps):
        raise InvalidParams("need 0 < eps < T")
    t_lo, t_hi = f.support.lo[-1], f.support.hi[-1]
    rows = _sobolev_slabs(f, wp, _slab_edges(eps, T, t_lo, t_hi), resolution, order, t_cells)
    p = wp.p
    lp = math.fsum(r[1] for r in rows)
    gr = math.fsum(r[2] for r in rows)
    total = lp ** (1 / p) + gr ** (1 / p)
    tail_est = 0.0
    if tail:
        extra = _sobolev_slabs(f, wp, [(None, a, b) for _, a, b in _slab_edges(eps / 2, eps, t_lo, t_hi)],
                               resolution, order, t_cells)
        lp2 = lp + math.fsum(r[1] for r in extra)
        gr2 = gr + math.fsum(r[2] for r in extra)
        tail_est = lp2 ** (1 / p) + gr2 ** (1 / p) - total
    return NormBreakdown(total=total, per_layer=[(k, a + b) for k, a, b in rows],
                         tail_estimate=tail_est, l_p_part=lp ** (1 / p), grad_part=gr ** (1 / p))


def poincare_check(f: ScalarField, Q: Box, cells: int = 8, order: int = 6):
    """(mean |f - f_Q|, edge * mean |grad f|) over a box away from t = 0."""
    if not f.has_grad:
        raise MissingGradient(f"field {f.name!r} has no gradient")
    if Q.lo[-1] <= 0:
        raise InvalidParams("box must stay away from the boundary hyperplane")
    upts, uw = _tensor_unit_rule(Q.dim, order, cells)
    lo, wid = np.array(Q.lo), np.array(Q.widths)
    pts = lo + wid * upts
    fv = f(pts)
    mean = math.fsum(uw * fv)
    lhs = math.fsum(uw * np.abs(fv - mean))
    rhs = max(Q.widths) * math.fsum(uw * np.linalg.norm(f.gradient(pts), axis=1))
    return lhs, rhs
