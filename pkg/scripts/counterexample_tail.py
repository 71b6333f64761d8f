"""Truncated weighted Sobolev norm of the counterexample as the cutoff height eps shrinks.

The gradient of u = phi(x) * log log(e/t) / 2 scales like 1/(t log(e/t)) and the
borderline measure like 1/log(4/t), so the part of the norm below eps decays only
like 1/log(1/eps).  The script fits N(eps) = N_inf - A / log(e/eps) and prints how
far each truncation sits from the extrapolated limit.

    python scripts/counterexample_tail.py [max_exponent]
"""
import math
import sys

import numpy as np

from tracelab.field import CounterexampleParams, counterexample_field
from tracelab.norms import weighted_sobolev_norm
from tracelab.weight import WeightParams


def main(e_max: int = 40) -> None:
    u = counterexample_field(CounterexampleParams(1, -1, 0))
    wp = WeightParams.borderline(1, -1)
    exps = list(range(6, e_max + 1, 2))
    norms = [weighted_sobolev_norm(u, wp, eps=2.0 ** -e, tail=False).total for e in exps]
    x = np.array([1 / math.log(math.e * 2.0 ** e) for e in exps])
    slope, limit = np.polyfit(x, norms, 1)
    print(f"fit: N(eps) = {limit:.5f} - {-slope:.5f} / log(e/eps)")
    print(f"{'eps':>8} {'norm':>10} {'fit':>10} {'gap to limit':>13}")
    for e, n, xi in zip(exps, norms, x):
        print(f"{'2^-' + str(e):>8} {n:10.5f} {limit + slope * xi:10.5f} {(limit - n) / limit:12.2%}")
    n10, n20 = (norms[exps.index(e)] for e in (10, 20))
    print(f"relative change 2^-10 -> 2^-20: {abs(n10 - n20) / n20:.2%}")
    need = math.e * math.exp(slope / (0.01 * limit))
    print(f"the gap to the limit drops below 1% only once eps < {need:.1e}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 40)
