"""Evaluatable fields, box averaging, and the built-in test functions.

Fields are vectorized: ``f(points)`` takes an ``(n, dim)`` array and returns
``(n,)`` values; ``f.gradient(points)`` returns ``(n, dim)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicHermiteSpline

from .dyadic import Box, level_index_grid
from .errors import InvalidParams, MissingGradient
from .weight import WeightParams, omega

Array = np.ndarray


@dataclass(frozen=True)
class ScalarField:
    dim: int
    func: Callable[[Array], Array]
    support: Box
    grad: Optional[Callable[[Array], Array]] = None
    name: str = "field"
    # per-axis coordinates where f or its derivatives jump or f turns steep; quadrature splits there
    kinks: tuple = ()

    def __call__(self, pts) -> Array:
        return self.func(np.atleast_2d(np.asarray(pts, dtype=float)))

    def gradient(self, pts) -> Array:
        if self.grad is None:
            raise MissingGradient(f"field {self.name!r} has no gradient")
        return self.grad(np.atleast_2d(np.asarray(pts, dtype=float)))

    @property
    def has_grad(self) -> bool:
        return self.grad is not None

    def scaled(self, c: float) -> "ScalarField":
        g = None if self.grad is None else (lambda p: c * self.grad(p))
        return ScalarField(self.dim, lambda p: c * self.func(p), self.support, g, f"{c}*{self.name}",
                           self.kinks)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        lo = tuple(map(min, self.support.lo, other.support.lo))
        hi = tuple(map(max, self.support.hi, other.support.hi))
        g = None
        if self.has_grad and other.has_grad:
            g = lambda p: self.grad(p) + other.grad(p)
        kinks = tuple(tuple(sorted(set(a) | set(b))) for a, b in
                      itertools.zip_longest(self.kinks, other.kinks, fillvalue=()))
        return ScalarField(self.dim, lambda p: self.func(p) + other.func(p), Box(lo, hi), g,
                           f"{self.name}+{other.name}", kinks)


# ---------------------------------------------------------------- quadrature

@lru_cache(maxsize=None)
def gauss_rule(order: int):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _tensor_unit_rule(dim: int, order: int, cells: int):
    """Composite tensor rule on [0,1]^dim with ``cells`` cells per axis."""
    x, w = gauss_rule(order)
    nodes = ((np.arange(cells)[:, None] + x[None, :]) / cells).ravel()
    weights = np.tile(w, cells) / cells
    grids = np.meshgrid(*([nodes] * dim), indexing="ij")
    wgrids = np.meshgrid(*([weights] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return pts, wts


class BoxAverages(NamedTuple):
    values: Array
    converged: Array
    cells: Array


_CHUNK_POINTS = 1 << 21


def _integrals_at(f: ScalarField, lo: Array, hi: Array, measure, order: int, cells: int):
    """Integral, |f| integral and mass of each box under one composite rule."""
    dim = lo.shape[1]
    upts, uw = _tensor_unit_rule(dim, order, cells)
    npts = len(uw)
    out = np.empty((3, len(lo)))
    step = max(1, _CHUNK_POINTS // npts)
    for s in range(0, len(lo), step):
        a, b = lo[s:s + step], hi[s:s + step]
        pts = a[:, None, :] + (b - a)[:, None, :] * upts[None, :, :]
        fv = f(pts.reshape(-1, dim)).reshape(len(a), npts)
        w = np.broadcast_to(uw, fv.shape) * np.prod(b - a, axis=1)[:, None]
        if measure is not None:
            w = w * omega(pts[:, :, -1], measure) / measure.normalization
        out[0, s:s + step] = (w * fv).sum(axis=1)
        out[1, s:s + step] = (w * np.abs(fv)).sum(axis=1)
        out[2, s:s + step] = w.sum(axis=1)
    return out


def _split_at_kinks(kinks, lo: Array, hi: Array):
    """Cut boxes along the kink hyperplanes; returns pieces and their owners."""
    owner = np.arange(len(lo))
    for axis, cuts in enumerate(kinks):
        for c in cuts:
            cross = (lo[:, axis] < c) & (c < hi[:, axis])
            if not cross.any():
                continue
            upper_lo = lo[cross].copy()
            upper_lo[:, axis] = c
            lower_hi = hi.copy()
            lower_hi[cross, axis] = c
            lo = np.concatenate([lo, upper_lo])
            hi = np.concatenate([lower_hi, hi[cross]])
            owner = np.concatenate([owner, owner[cross]])
    return lo, hi, owner


def box_averages(f: ScalarField, lo, hi, measure: Optional[WeightParams] = None,
                 order: int = 4, rtol: float = 1e-8, max_refine: int = 4,
                 atol: float = 1e-14) -> BoxAverages:
    """Averages of ``f`` over many boxes, refining each until it settles.

    Boxes are first cut along the field's declared kinks.  Each piece gets
    1, 2, 4, ... cells per axis of ``order``-point Gauss-Legendre and is
    accepted when two successive refinements differ by less than ``rtol``
    relative, or by less than ``atol`` in the average (values far below
    ``atol``, such as the flat tails of the cutoffs, cannot settle relatively).  Pieces still moving
    after ``max_refine`` refinements mark their box converged=False.
    ``measure`` is None for Lebesgue or a WeightParams for mu.
    """
    lo = np.atleast_2d(np.asarray(lo, dtype=float))
    hi = np.atleast_2d(np.asarray(hi, dtype=float))
    n = len(lo)
    plo, phi, owner = _split_at_kinks(f.kinks, lo, hi)
    m = len(plo)
    res = np.empty((3, m))
    conv = np.zeros(m, dtype=bool)
    cells_used = np.ones(m, dtype=np.int64)
    prev = _integrals_at(f, plo, phi, measure, order, 1)
    # pieces carrying a negligible share of their box's |f| mass only need absolute accuracy
    floor = 1e-6 * np.bincount(owner, weights=prev[1], minlength=n)[owner]
    todo = np.arange(m)
    cells = 1
    for _ in range(max_refine):
        cells *= 2
        cur = _integrals_at(f, plo[todo], phi[todo], measure, order, cells)
        ok = np.abs(cur[0] - prev[0]) <= rtol * np.maximum(np.abs(cur[0]), floor[todo]) + atol * cur[2]
        res[:, todo] = cur
        cells_used[todo] = cells
        conv[todo[ok]] = True
        todo, prev = todo[~ok], cur[:, ~ok]
        if len(todo) == 0:
            break
    integral = np.bincount(owner, weights=res[0], minlength=n)
    mass = np.bincount(owner, weights=res[2], minlength=n)
    ok_all = np.bincount(owner, weights=(~conv).astype(float), minlength=n) == 0
    used = np.zeros(n, dtype=np.int64)
    np.maximum.at(used, owner, cells_used)
    return BoxAverages(integral / mass, ok_all, used)


def cube_average(f: ScalarField, region: Box, measure: Optional[WeightParams] = None,
                 order: int = 4) -> BoxAverages:
    """Scalar form of :func:`box_averages` for one region."""
    res = box_averages(f, [region.lo], [region.hi], measure, order)
    return BoxAverages(float(res.values[0]), bool(res.converged[0]), int(res.cells[0]))


# ------------------------------------------------------------- profiles

# the kink of rho at 1, its flat join at 2, and graded cuts through the steep decay between
RHO_BREAKS = (1.0, 1.25, 1.5, 1.75, 1.875, 2.0)


def rho(s):
    """1 on [0,1], decays to 0 on (1,2), 0 beyond.

    Smooth at s = 2; at s = 1 the second derivative jumps (-2 vs 0).
    """
    s = np.asarray(s, dtype=float)
    w = np.clip(s - 1.0, 0.0, 1.0)
    inner = (s > 1) & (s < 2)
    safe = np.where(inner, 1.0 - w * w, 1.0)
    val = np.where(inner, np.exp(1.0 - 1.0 / safe), 0.0)
    return np.where(s <= 1, 1.0, val)


def drho(s):
    s = np.asarray(s, dtype=float)
    w = np.clip(s - 1.0, 0.0, 1.0)
    inner = (s > 1) & (s < 2)
    safe = np.where(inner, 1.0 - w * w, 1.0)
    return np.where(inner, rho(s) * (-2.0 * w / safe ** 2), 0.0)


def bump_profile(x: Array, center=0.0, radius=1.0):
    """phi((x - c)/r) with phi = prod_i rho(|x_i|); returns (values, gradients)."""
    z = (x - np.asarray(center, dtype=float)) / radius
    a = np.abs(z)
    r = rho(a)
    dr = drho(a) * np.sign(z) / radius
    val = np.prod(r, axis=1)
    grads = np.empty_like(z)
    for i in range(z.shape[1]):
        others = np.prod(np.delete(r, i, axis=1), axis=1) if z.shape[1] > 1 else 1.0
        grads[:, i] = dr[:, i] * others
    return val, grads


def cutoff(t):
    """Smooth height cutoff: 1 for t <= 1/2, 0 for t >= 1."""
    return rho(2.0 * np.asarray(t, dtype=float))


def dcutoff(t):
    return 2.0 * drho(2.0 * np.asarray(t, dtype=float))


def product_field(dim: int, x_profile, t_profile, support: Box, name: str,
                  kinks: tuple = ()) -> ScalarField:
    """f(x, t) = a(x) b(t) from ``x_profile(x) -> (a, grad a)`` and
    ``t_profile(t) -> (b, b')``."""

    def func(p):
        a, _ = x_profile(p[:, :-1])
        b, _ = t_profile(p[:, -1])
        return a * b

    def grad(p):
        a, ga = x_profile(p[:, :-1])
        b, db = t_profile(p[:, -1])
        return np.concatenate([ga * b[:, None], (a * db)[:, None]], axis=1)

    return ScalarField(dim + 1, func, support, grad, name, kinks)


def power_cutoff(s: float):
    """t -> t**s * cutoff(t) with derivative."""

    def prof(t):
        c = cutoff(t)
        val = t ** s * c if s else c
        der = (s * t ** (s - 1) * c if s else 0.0) + (t ** s if s else 1.0) * dcutoff(t)
        return val, der

    return prof


def bump_cutoff_field(d: int, s: float = 0.0, center=0.0, radius=1.0) -> ScalarField:
    """phi((x-c)/r) * t**s * cutoff(t), supported in the box (c-2r, c+2r]^d x (0, 1]."""
    c = np.broadcast_to(np.asarray(center, dtype=float), (d,))
    support = Box(tuple(c - 2 * radius) + (0.0,), tuple(c + 2 * radius) + (1.0,))
    kinks = tuple(tuple(sorted({ci + sg * radius * b for b in RHO_BREAKS for sg in (-1, 1)})) for ci in c)
    kinks += (tuple(b / 2 for b in RHO_BREAKS),)
    return product_field(d, lambda x: bump_profile(x, c, radius), power_cutoff(s), support,
                         f"bump(c={list(c)},r={radius})*t^{s}*cutoff", kinks)


def constant_field(c: float, dim: int, support: Optional[Box] = None) -> ScalarField:
    support = support or Box((-4.0,) * dim, (4.0,) * dim)
    return ScalarField(dim, lambda p: np.full(len(p), float(c)), support,
                       lambda p: np.zeros_like(p), f"const({c})")


def linear_field(coeffs, support: Box, offset: float = 0.0) -> ScalarField:
    a = np.asarray(coeffs, dtype=float)
    return ScalarField(len(a), lambda p: p @ a + offset, support,
                       lambda p: np.broadcast_to(a, p.shape).copy(), f"linear({list(a)})")


# ---------------------------------------------------------- counterexample

@dataclass(frozen=True)
class CounterexampleParams:
    p: float
    lam: float
    beta: float = 0.0

    def __post_init__(self):
        if self.p < 1:
            raise InvalidParams("p must be >= 1")
        if self.p == 1 and self.beta != 0:
            raise InvalidParams("beta must be 0 when p = 1")
        if self.p > 1 and not (0 < self.beta < 1 < self.beta * self.p):
            raise InvalidParams("need 0 < beta < 1 < beta*p when p > 1")


class _VTable:
    """v(t) = int_0^{W(t)} dw / (1 + w**beta), W = log log(e/t), tabulated."""

    W_MAX = 8.0  # W(t) < 6.7 for every positive double

    def __init__(self, beta: float, n: int = 600):
        self.beta = beta
        w = self.W_MAX * (np.arange(n + 1) / n) ** 3
        integrand = lambda s: 1.0 / (1.0 + s ** beta)
        pieces = [quad(integrand, a, b, epsabs=0, epsrel=1e-13)[0] for a, b in zip(w[:-1], w[1:])]
        vals = np.concatenate([[0.0], np.cumsum(pieces)])
        self.spline = CubicHermiteSpline(w, vals, integrand(w))

    def __call__(self, W):
        return self.spline(W)


@lru_cache(maxsize=None)
def _vtable(beta: float) -> _VTable:
    return _VTable(beta)


def v_profile(beta: float):
    """Height profile v(t) (0 for t >= 1) and its derivative."""

    def prof(t):
        t = np.asarray(t, dtype=float)
        low = np.minimum(t, 1.0)
        L = np.log(np.e / low)
        W = np.log(L)
        if beta == 0:
            v = 0.5 * W
            denom = 2.0
        else:
            v = _vtable(beta)(W)
            denom = 1.0 + W ** beta
        dv = -1.0 / (low * L * denom)
        inside = t < 1.0
        return np.where(inside, v, 0.0), np.where(inside, dv, 0.0)

    return prof


def counterexample_field(cp: CounterexampleParams, d: int = 1) -> ScalarField:
    """u(x', t) = phi(x') max(v(t), 0), the function without a trace."""
    support = Box((-2.0,) * d + (0.0,), (2.0,) * d + (1.0,))
    kinks = (tuple(sorted({sg * b for b in RHO_BREAKS for sg in (-1, 1)})),) * d + ((1.0,),)
    return product_field(d, lambda x: bump_profile(x), v_profile(cp.beta), support,
                         f"counterexample(p={cp.p},lam={cp.lam},beta={cp.beta})", kinks)


# ------------------------------------------------------------- sampling

def sample_to_grid(f: ScalarField, level: int, order: int = 4):
    """Level-L cube averages of a field on R^d over its support."""
    from .grid import BoundaryGridFunction

    idx = level_index_grid(level, f.support)
    h = math.ldexp(1.0, -level)
    lo = idx * h
    res = box_averages(f, lo, lo + h, None, order)
    return BoundaryGridFunction(level, idx, res.values, flagged=~res.converged)
