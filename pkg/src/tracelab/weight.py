"""Log-power weights on the upper half-space and their Muckenhoupt ratios.

The weight depends only on the height ``t = x_{d+1}``::

    omega(t) = t**alpha * log(4/t)**lam    for 0 < t <= 1
    omega(t) = log(4)**lam                 for t > 1

and the measure ``mu`` is ``omega / log(4)**lam`` times Lebesgue measure, so
that it equals Lebesgue measure above height 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .dyadic import Box
from .errors import DomainError, InvalidParams

LOG4 = math.log(4.0)
_TOL = 1e-12


@dataclass(frozen=True)
class WeightParams:
    p: float
    alpha: float
    lam: float
    dim: int = 1

    def __post_init__(self):
        if not self.p >= 1:
            raise InvalidParams(f"p must be >= 1, got {self.p}")
        if not self.alpha > -1:
            raise InvalidParams(f"alpha must be > -1, got {self.alpha}")
        if self.alpha > self.p - 1 + _TOL:
            raise InvalidParams(f"alpha must be <= p-1 = {self.p - 1}, got {self.alpha}")
        if self.dim not in (1, 2, 3):
            raise InvalidParams(f"dim must be 1, 2 or 3, got {self.dim}")

    @classmethod
    def borderline(cls, p: float, lam: float, dim: int = 1) -> "WeightParams":
        return cls(p=p, alpha=p - 1, lam=lam, dim=dim)

    @property
    def is_borderline(self) -> bool:
        return abs(self.alpha - (self.p - 1)) <= _TOL

    def in_gamma(self) -> bool:
        return in_gamma(self.p, self.lam)

    @property
    def normalization(self) -> float:
        return LOG4 ** self.lam


def in_gamma(p: float, lam: float) -> bool:
    """Membership of (p, lam) in the region where the trace exists."""
    return (p > 1 and lam > p - 1) or (p == 1 and lam >= 0)


def omega(t, params: WeightParams):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("weight is defined for t > 0 only")
    low = np.minimum(t, 1.0)
    val = low ** params.alpha * np.log(4.0 / low) ** params.lam
    out = np.where(t <= 1.0, val, params.normalization)
    return out if out.ndim else float(out)


def _log_endpoints(a: float, b: float):
    ua = math.inf if a == 0 else math.log(4.0 / a)
    return ua, math.log(4.0 / b)


def power_log_diverges(a: float, beta: float, gam: float) -> bool:
    """Whether int_a t**beta log(4/t)**gam dt diverges at t = 0."""
    if a > 0:
        return False
    return beta < -1 or (beta == -1 and gam >= -1)


def power_log_integral(a: float, b: float, beta: float, gam: float) -> float:
    """int_a^b t**beta * log(4/t)**gam dt for 0 <= a < b <= 1.

    Uses u = log(4/t), turning the integrand into exp(-s u) u**gam with
    s = beta + 1, integrated adaptively (QUADPACK) after factoring out the
    exponential at the end where it peaks.  Returns inf when divergent.
    """
    if not (0 <= a < b <= 1):
        raise DomainError(f"need 0 <= a < b <= 1, got a={a}, b={b}")
    if power_log_diverges(a, beta, gam):
        return math.inf
    ua, ub = _log_endpoints(a, b)
    s = beta + 1.0
    if s == 0:
        if gam == -1:
            return math.log(ua / ub)
        if math.isinf(ua):
            return -ub ** (gam + 1) / (gam + 1)
        return (ua ** (gam + 1) - ub ** (gam + 1)) / (gam + 1)
    span = ua - ub
    if s > 0:
        scale = 4.0 ** s * math.exp(-s * ub)
        f = lambda w: math.exp(-s * w) * (ub + w) ** gam
    else:
        scale = 4.0 ** s * math.exp(-s * ua)
        f = lambda w: math.exp(s * w) * (ua - w) ** gam
    val, _ = quad(f, 0.0, span, epsabs=0.0, epsrel=1e-13, limit=400)
    return scale * val


def power_log_integral_closed(a: float, b: float, beta: float, n: int) -> float:
    """Integration-by-parts closed form of :func:`power_log_integral` for
    integer n >= 0 and beta > -1."""
    if n < 0 or int(n) != n or beta <= -1:
        raise InvalidParams("closed form needs integer n >= 0 and beta > -1")
    s = beta + 1.0
    ua, ub = _log_endpoints(a, b)

    def antider(u):
        # -exp(-s u) * sum_i n!/i! u**i / s**(n-i+1)
        if math.isinf(u):
            return 0.0
        tot = 0.0
        for i in range(n + 1):
            tot += math.factorial(n) / math.factorial(i) * u ** i / s ** (n - i + 1)
        return -math.exp(-s * u) * tot

    return 4.0 ** s * (antider(ua) - antider(ub))


def weight_integral(a: float, b: float, beta: float, gam: float, const: float) -> float:
    """int_a^b of t**beta log(4/t)**gam on (0,1] continued by ``const`` above 1."""
    total = 0.0
    if a < 1:
        total += power_log_integral(a, min(b, 1.0), beta, gam)
    if b > 1:
        total += (b - max(a, 1.0)) * const
    return total


def vertical_integral(a: float, b: float, params: WeightParams) -> float:
    """mu-measure of the vertical interval (a, b] (unit horizontal section)."""
    if a < 0 or not b > a:
        raise DomainError(f"need 0 <= a < b, got a={a}, b={b}")
    raw = weight_integral(a, b, params.alpha, params.lam, params.normalization)
    return raw / params.normalization


def mu_measure(region: Box, params: WeightParams) -> float:
    a, b = region.lo[-1], region.hi[-1]
    if a < 0:
        raise DomainError("region dips below the boundary hyperplane")
    horiz = math.prod(region.widths[:-1]) if region.dim > 1 else 1.0
    return horiz * vertical_integral(a, b, params)


def weight_essinf(a: float, b: float, params: WeightParams) -> float:
    """ess inf of omega over heights in (a, b], from the monotonicity structure."""
    al, lam = params.alpha, params.lam
    cands = []
    if b > 1:
        cands.append(params.normalization)
    top = min(b, 1.0)
    if a < 1:
        cands.append(float(omega(top, params)))
        if a == 0:
            # limit of t**al log(4/t)**lam as t -> 0+
            if al > 0 or (al == 0 and lam < 0):
                cands.append(0.0)
            elif al == 0 and lam == 0:
                cands.append(1.0)
        else:
            cands.append(float(omega(a, params)))
        # interior critical point: al * log(4/t) = lam
        if al != 0 and lam / al > 0:
            # compare in u = log(4/t); tc itself may underflow (u overflows)
            uc = lam / al
            if uc > math.log(4.0 / top) and (a == 0 or uc < math.log(4.0 / a)):
                # omega(tc) = 4**al * e**-lam * uc**lam
                cands.append(math.exp(al * math.log(4.0) - lam + lam * math.log(uc)))
    return min(cands)


@dataclass
class ApScanRow:
    k: int
    left_factor: float
    right_factor: float
    ratio: float


def ap_factors(region: Box, params: WeightParams) -> ApScanRow:
    """Both factors of the A_p quantity over a box; k is left as -1."""
    a, b = region.lo[-1], region.hi[-1]
    if a < 0:
        raise DomainError("region must lie in the closed upper half-space")
    p, al, lam = params.p, params.alpha, params.lam
    left = weight_integral(a, b, al, lam, params.normalization) / (b - a)
    if p == 1:
        inf = weight_essinf(a, b, params)
        right = inf
        ratio = math.inf if inf == 0 else left / inf
    else:
        q = 1.0 / (p - 1)
        try:
            dual = weight_integral(a, b, -al * q, -lam * q, params.normalization ** -q)
        except OverflowError:
            raise ArithmeticError(f"dual exponent 1/(p-1) = {q:.3g} leaves double range") from None
        right = dual / (b - a)
        ratio = math.inf if math.isinf(right) else left * right ** (p - 1)
    if not ratio >= 1 - 1e-9:
        raise ArithmeticError(f"A_p ratio {ratio} < 1 violates Jensen; quadrature failure")
    return ApScanRow(k=-1, left_factor=left, right_factor=right, ratio=ratio)


def ap_ratio(region: Box, params: WeightParams) -> float:
    return ap_factors(region, params).ratio


def fit_growth_exponent(ks, ratios, corrections: int = 3) -> float:
    """Asymptotic exponent s in ratio ~ C (k+2)**s.

    The log factor of the weight produces corrections in powers of
    1/((k+2) log 2), so log(ratio) is fitted by
    s log(k+2) + b + sum_{i<=corrections} e_i (k+2)**-i.
    """
    ks = np.asarray(ks, dtype=float)
    r = np.asarray(ratios, dtype=float)
    if not np.all(np.isfinite(r)) or len(ks) < corrections + 3:
        return math.nan
    x = ks + 2.0
    cols = [np.log(x), np.ones_like(x)] + [x ** -i for i in range(1, corrections + 1)]
    coef, *_ = np.linalg.lstsq(np.vstack(cols).T, np.log(r), rcond=None)
    return float(coef[0])


def loglog_slope(ks, ratios) -> float:
    ks = np.asarray(ks, dtype=float)
    r = np.asarray(ratios, dtype=float)
    if not np.all(np.isfinite(r)) or len(ks) < 2:
        return math.nan
    return float(np.polyfit(np.log(ks + 2.0), np.log(r), 1)[0])


BOUNDED = "A_p-bounded"
BLOWUP = "blows up like (k+2)^(p-1)"
DUAL_DIVERGES = "dual diverges"
A1 = "A_1"
A1_FAILS = "A_1 fails"


def classify(params: WeightParams) -> str:
    p, lam = params.p, params.lam
    if p == 1:
        if not params.is_borderline:
            return A1
        return A1 if lam >= 0 else A1_FAILS
    if not params.is_borderline:
        return BOUNDED
    return BLOWUP if lam > p - 1 else DUAL_DIVERGES


@dataclass
class ApScan:
    params: WeightParams
    rows: list
    fitted_exponent: float
    naive_slope: float
    verdict: str
    fit_range: tuple = field(default=(4, None))


def ap_scan(params: WeightParams, k_max: int, fit_from: int = 4) -> ApScan:
    """A_p quantities over the cubes (0, 2**-k]^{d+1}, k = 0..k_max."""
    if k_max < 1:
        raise InvalidParams("k_max must be >= 1")
    rows = []
    d = params.dim
    for k in range(k_max + 1):
        h = math.ldexp(1.0, -k)
        row = ap_factors(Box((0.0,) * (d + 1), (h,) * (d + 1)), params)
        row.k = k
        rows.append(row)
    # the fit has 5 coefficients; keep at least 6 levels in the window
    lo = min(fit_from, max(k_max - 5, 0))
    fit_rows = [r for r in rows if r.k >= lo]
    ks = [r.k for r in fit_rows]
    rs = [r.ratio for r in fit_rows]
    return ApScan(
        params=params,
        rows=rows,
        fitted_exponent=fit_growth_exponent(ks, rs),
        naive_slope=loglog_slope(ks, rs),
        verdict=classify(params),
        fit_range=(lo, k_max),
    )
