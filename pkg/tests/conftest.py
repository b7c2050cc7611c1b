"""Shared test helpers: random FIFO function generation and exact reference
evaluation, kept deliberately independent of the package internals (plain
Fractions, linear scans) so they can serve as oracles."""

import random
from fractions import Fraction

PERIOD = 86_400_000


def as_frac(x):
    """Exact Fraction view of an int / Fraction / gmpy2.mpq value."""
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(int(x.numerator), int(x.denominator))


def ref_eval(points, tau):
    """Reference evaluation of a periodic piecewise-linear function given as
    raw (departure, travel) pairs: linear scan, Fraction interpolation."""
    pts = sorted((as_frac(d), as_frac(t)) for d, t in points)
    if len(pts) == 1:
        return pts[0][1]
    tau = as_frac(tau) % PERIOD
    if tau < pts[0][0] or tau >= pts[-1][0]:
        (x1, y1), (x2, y2) = pts[-1], (pts[0][0] + PERIOD, pts[0][1])
        if tau < pts[0][0]:
            tau += PERIOD
    else:
        for i in range(len(pts) - 1):
            if pts[i][0] <= tau < pts[i + 1][0]:
                (x1, y1), (x2, y2) = pts[i], pts[i + 1]
                break
    return y1 + (y2 - y1) * (tau - x1) / (x2 - x1)


def fifo_points(rng: random.Random, n: int, jitter: int | None = None):
    """Random integer breakpoints of a FIFO travel-time function.

    Built on the arrival axis where FIFO is plain monotonicity: arrivals step
    forward by random non-negative increments, travel times stay positive,
    and the headroom of the first travel value keeps the wrap-around segment
    FIFO no matter how the increments land.  jitter=0 produces long stretches
    of arrival-flat (travel slope −1) segments, a useful stress shape.
    """
    if n == 1:
        return [(rng.randrange(PERIOD), rng.randrange(1_000, 400_000))]
    deps = sorted(rng.sample(range(PERIOD), n))
    base = rng.randrange(310_000, 420_000)
    if jitter is None:
        jitter = 290_000 // n
    arrivals = [deps[0] + base]
    for d in deps[1:]:
        lo = max(arrivals[-1], d + 1_000)
        arrivals.append(lo + (rng.randrange(jitter) if jitter else 0))
    return [(d, a - d) for d, a in zip(deps, arrivals)]
