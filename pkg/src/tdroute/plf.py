"""Periodic piecewise-linear travel-time functions and their algebra.

The time axis is milliseconds over a wrapping day of ``PERIOD_MS`` ms.  A
travel-time function (TTF) maps a departure time within the period to a
travel time and repeats daily.  Functions are stored as breakpoints with
strictly increasing departures; between breakpoints the value interpolates
linearly, and after the last breakpoint the function wraps around to the
first breakpoint of the following period.  A single breakpoint denotes a
constant function.

Input data is integer-valued.  Derived functions (compositions, minima)
keep their breakpoint coordinates *exact*: a kink that falls between two
integer milliseconds is stored as an exact rational instead of being
rounded.  That keeps ``link`` and ``merge`` genuine lattice operations —
associative, commutative in the ways they should be, and independent of
the order a search happens to apply them in — which is what makes results
reproducible bit-for-bit and lets reference algorithms agree with the
engine without tolerances.  gmpy2 provides fast exact rationals when
available; the stdlib ``Fraction`` is the drop-in fallback.

Every operation preserves the FIFO property (departing later never lets
you arrive earlier): ``link`` and ``merge`` preserve it structurally, and
``approximate`` selects a subset of existing breakpoints, which cannot
create an arrival-time inversion.
"""

from __future__ import annotations

import bisect
from enum import Enum

try:
    from gmpy2 import mpq as _RAT
except ImportError:  # pragma: no cover - gmpy2 is an optional speedup
    from fractions import Fraction as _RAT

PERIOD_MS = 86_400_000

__all__ = [
    "PERIOD_MS",
    "TTF",
    "ZERO",
    "Dominance",
    "evaluate",
    "link",
    "merge",
    "simulated_merge",
    "approximate",
    "check_fifo",
    "max_abs_difference",
    "round_half_up",
]


def _ratio(num: int, den: int):
    """Exact num/den with den > 0, collapsed to a plain int when integral."""
    q, r = divmod(num, den)
    return q if r == 0 else _RAT(num, den)


def _norm(x):
    """Collapse an exact rational with unit denominator to a plain int."""
    if isinstance(x, int):
        return x
    if x.denominator == 1:
        return int(x)
    return x


def _qdiv(num, den):
    """Exact num/den for any mix of ints and rationals, den != 0."""
    if isinstance(num, int) and isinstance(den, int):
        if den < 0:
            num, den = -num, -den
        return _ratio(num, den)
    return _norm(num / den)


def round_half_up(x) -> int:
    """Round an exact number to the nearest millisecond, halves upward."""
    if isinstance(x, int):
        return x
    n, d = x.numerator, x.denominator
    return int((2 * n + d) // (2 * d))


def _interp(x1, y1, x2, y2, x):
    """Exact value at x of the line through (x1, y1)-(x2, y2), x2 > x1."""
    if x == x1:
        return y1
    dy = y2 - y1
    if dy == 0:
        return y1
    num = dy * (x - x1)
    den = x2 - x1
    if isinstance(num, int) and isinstance(den, int):
        q, r = divmod(num, den)
        if r == 0:
            return y1 + q
        return _norm(y1 + _RAT(num, den))
    return _norm(y1 + num / den)


def _prune_cyclic(pts: list, payload: list | None = None):
    """Drop breakpoints that are exactly collinear with their cyclic
    neighbours.  ``payload`` optionally carries one tag per outgoing segment;
    tags of merged segments combine with "g" winning over "f" (a segment that
    improved anywhere keeps that fact through pruning)."""
    n = len(pts)
    if n <= 2:
        return pts, payload
    # Anchor: the first point that is a genuine kink between its cyclic
    # neighbours; a fully collinear cycle is a constant (periodicity).
    px, py = pts[-1][0] - PERIOD_MS, pts[-1][1]
    anchor = -1
    qx, qy = pts[0]
    for i in range(n):
        if i + 1 < n:
            rx, ry = pts[i + 1]
        else:
            rx, ry = pts[0][0] + PERIOD_MS, pts[0][1]
        if (qy - py) * (rx - qx) != (ry - qy) * (qx - px):
            anchor = i
            break
        px, py, qx, qy = qx, qy, rx, ry
    if anchor < 0:
        return [(0, pts[0][1])], None if payload is None else [payload[0]]
    # One pass around the cycle starting at the anchor (a guaranteed kink),
    # indices past the end lifted by one period.  Surviving points sit on
    # coordinate stacks so the collinearity test touches no tuples.
    kx = [pts[anchor][0]]
    ky = [pts[anchor][1]]
    kt = None if payload is None else [payload[anchor]]
    for j in range(1, n + 1):
        idx = anchor + j
        if idx >= n:
            src = idx - n
            jx, jy = pts[src]
            jx += PERIOD_MS
        else:
            src = idx
            jx, jy = pts[src]
        while len(kx) >= 2:
            tx = kx[-1]
            ty = ky[-1]
            if (ty - ky[-2]) * (jx - tx) != (jy - ty) * (tx - kx[-2]):
                break
            kx.pop()
            ky.pop()
            if kt is not None:
                dropped = kt.pop()
                if dropped == "g":
                    kt[-1] = "g"
        kx.append(jx)
        ky.append(jy)
        if kt is not None:
            kt.append(None if j == n else payload[src])
    kx.pop()  # the closing sentinel (anchor lifted by one period)
    ky.pop()
    if kt is not None:
        kt.pop()
    # Survivors are strictly ascending in lifted coordinates; entries at or
    # past the period belong before the rest once reduced (each is strictly
    # below the anchor), so reduction is a rotation, not a sort.
    split = len(kx)
    for k, x in enumerate(kx):
        if x >= PERIOD_MS:
            split = k
            break
    out = [(kx[k] - PERIOD_MS, ky[k]) for k in range(split, len(kx))]
    out.extend((kx[k], ky[k]) for k in range(split))
    if kt is None:
        return out, None
    return out, kt[split:] + kt[:split]


class TTF:
    """A periodic piecewise-linear travel-time function.

    Stored in canonical form: breakpoints strictly increasing in departure,
    no exactly-collinear middle points, constants collapsed to a single
    breakpoint at departure 0, and integral coordinates held as plain ints.
    Instances are immutable by convention and safe to share.
    """

    __slots__ = ("deps", "tts", "min_travel", "max_travel", "_flat_arr")

    def __init__(self, points):
        pts = [(_norm(d), _norm(t)) for d, t in points]
        if not pts:
            raise ValueError("a travel-time function needs at least one breakpoint")
        for d, t in pts:
            if not 0 <= d < PERIOD_MS:
                raise ValueError(f"breakpoint departure {d} outside [0, {PERIOD_MS})")
            if t < 0:
                raise ValueError(f"negative travel time {t}")
        for i in range(1, len(pts)):
            if pts[i - 1][0] >= pts[i][0]:
                raise ValueError("breakpoint departures must be strictly increasing")
        if len(pts) == 1:
            pts = [(0, pts[0][1])]  # constants live at departure 0
        else:
            first = pts[0][1]
            if all(t == first for _, t in pts):
                pts = [(0, first)]
            else:
                pts, _ = _prune_cyclic(pts)
        self.deps = tuple(p[0] for p in pts)
        self.tts = tuple(p[1] for p in pts)
        self.min_travel = min(self.tts)
        self.max_travel = max(self.tts)
        self._flat_arr = None

    @classmethod
    def constant(cls, travel) -> TTF:
        return cls([(0, travel)])

    @classmethod
    def _raw(cls, pts) -> TTF:
        """Wrap points already in canonical form — normalized coordinates,
        strictly increasing departures, no cyclic-collinear middles, constants
        collapsed.  Internal fast path for the function algebra, which prunes
        its own output; external data must go through the checking
        constructor."""
        obj = cls.__new__(cls)
        obj.deps = tuple(p[0] for p in pts)
        obj.tts = tuple(p[1] for p in pts)
        obj.min_travel = min(obj.tts)
        obj.max_travel = max(obj.tts)
        obj._flat_arr = None
        return obj

    @property
    def is_constant(self) -> bool:
        return len(self.deps) == 1

    @property
    def has_flat_arrival(self) -> bool:
        """True when some segment (wrap-around included) has slope exactly
        -1, i.e. the arrival function is constant across it.  Computed once
        and cached; the instance is otherwise immutable."""
        v = self._flat_arr
        if v is None:
            deps, tts = self.deps, self.tts
            n = len(deps)
            v = False
            if n > 1:
                prev = deps[0] + tts[0]
                for i in range(1, n):
                    cur = deps[i] + tts[i]
                    if cur == prev:
                        v = True
                        break
                    prev = cur
                else:
                    v = prev == deps[0] + PERIOD_MS + tts[0]
            self._flat_arr = v
        return v

    @property
    def points(self) -> tuple:
        return tuple(zip(self.deps, self.tts))

    def __len__(self) -> int:
        return len(self.deps)

    def value_at(self, tau):
        """Exact travel time at departure tau (any real time; reduced into
        the period).  Integral results come back as plain ints."""
        if len(self.deps) == 1:
            return self.tts[0]
        tau = tau % PERIOD_MS
        deps, tts = self.deps, self.tts
        i = bisect.bisect_right(deps, tau) - 1
        if i < 0:
            return _interp(deps[-1] - PERIOD_MS, tts[-1], deps[0], tts[0], tau)
        if tau == deps[i]:
            return tts[i]
        if i == len(deps) - 1:
            return _interp(deps[-1], tts[-1], deps[0] + PERIOD_MS, tts[0], tau)
        return _interp(deps[i], tts[i], deps[i + 1], tts[i + 1], tau)

    def value_ms(self, tau) -> int:
        return round_half_up(self.value_at(tau))

    def arrival_at(self, tau):
        """Exact arrival time when departing at absolute time tau."""
        return tau + self.value_at(tau)

    def __eq__(self, other):
        if not isinstance(other, TTF):
            return NotImplemented
        return self.deps == other.deps and self.tts == other.tts

    def __hash__(self):
        return hash((self.deps, self.tts))

    def __repr__(self):
        if self.is_constant:
            return f"TTF.constant({self.tts[0]!r})"
        return f"TTF({list(zip(self.deps, self.tts))!r})"


ZERO = TTF.constant(0)


def evaluate(f: TTF, tau):
    """Exact travel time of f for departure tau; round with round_half_up
    when a millisecond figure is needed."""
    return f.value_at(tau)


def check_fifo(f: TTF) -> bool:
    """True when departing later never yields an earlier arrival, i.e. the
    arrival function is non-decreasing across consecutive breakpoints and
    the wrap-around segment."""
    n = len(f.deps)
    if n == 1:
        return True
    arr = [f.deps[i] + f.tts[i] for i in range(n)]
    for i in range(n - 1):
        if arr[i] > arr[i + 1]:
            return False
    return arr[-1] <= f.deps[0] + PERIOD_MS + f.tts[0]


def _ceil_div(a, b: int):
    """Smallest integer k with k*b >= a; b > 0, a int or rational."""
    if isinstance(a, int):
        return -((-a) // b)
    q = a / b
    return int(-((-q.numerator) // q.denominator))


def link(f: TTF, g: TTF, *, fast_paths: bool = True) -> TTF:
    """Concatenate: travel f, then g — result(tau) = f(tau) + g(tau + f(tau)).

    Breakpoints are the departures of f plus the backward projections of g's
    departures through f's arrival function, so the result never carries more
    than len(f) + len(g) points.  Constant operands take shift/add fast paths
    (``fast_paths=False`` forces the general sweep; the outcome is identical,
    the flag only exists so instrumentation can prove that)."""
    if fast_paths:
        # Constant operands only translate the other function (x by -c mod
        # period, or y by +c).  Translation preserves canonical form — the
        # cyclic breakpoint structure and every collinearity relation are
        # unchanged — so the result shares the operand's validity.
        if f.is_constant and g.is_constant:
            return TTF.constant(f.tts[0] + g.tts[0])
        if f.is_constant:
            c = f.tts[0]
            pts = sorted(((d - c) % PERIOD_MS, t + c) for d, t in zip(g.deps, g.tts))
            return TTF._raw(pts)
        if g.is_constant:
            c = g.tts[0]
            return TTF._raw([(d, t + c) for d, t in zip(f.deps, f.tts)])
    return _link_sweep(f, g)


def _link_sweep(f: TTF, g: TTF) -> TTF:
    fdeps, ftts = f.deps, f.tts
    gdeps, gtts = g.deps, g.tts
    n, m = len(fdeps), len(gdeps)
    if n == 1:
        c = ftts[0]
        pts = [(d, c + g.value_at(d + c)) for d in fdeps]
        pts.extend(((e - c) % PERIOD_MS, c + tg) for e, tg in zip(gdeps, gtts))
        pts.sort(key=lambda p: p[0])
        dedup = [pts[0]]
        for p in pts[1:]:
            if p[0] != dedup[-1][0]:
                dedup.append(p)
        return TTF(dedup)
    # f's arrival function is non-decreasing (FIFO), so one pass over f's
    # segments meets g's breakpoints — lifted into the arrival window
    # [arr[0], arr[0] + period) — in ascending order: a pure merge, no
    # searching.  Each g breakpoint lifts into that window exactly once.
    arr = [fdeps[i] + ftts[i] for i in range(n)]
    a0 = arr[0]
    lifted = sorted(
        (e + _ceil_div(a0 - e, PERIOD_MS) * PERIOD_MS, tg)
        for e, tg in zip(gdeps, gtts)
    )
    # g's value along the arrival axis, walked with its own cursor: segment
    # endpoints are consecutive lifted points, closed by period images.
    gx = [lifted[-1][0] - PERIOD_MS] + [p[0] for p in lifted] + [lifted[0][0] + PERIOD_MS]
    gy = [lifted[-1][1]] + [p[1] for p in lifted] + [lifted[0][1]]
    jg = 0  # gx[jg] <= current arrival < gx[jg + 1]
    ev = 0  # next lifted breakpoint to project back through f
    head: list = []  # wrap-segment projections that land before fdeps[0]
    # A composed breakpoint is collinear with its neighbours only when an
    # f-kink cancels: either g's covering segment has slope exactly -1
    # (arrival-flat), or a lifted g breakpoint coincides with the f
    # breakpoint's arrival so both kinks meet at one departure.  Projected
    # g-kinks land strictly inside arrival-increasing f segments and always
    # survive — they are genuine kinks of g, except for a constant g whose
    # anchor breakpoint is no kink at all.  Clean sweeps skip the pruning
    # pass.
    dirty = m == 1 or g.has_flat_arrival
    pts = []
    for i in range(n):
        x1, y1, a1 = fdeps[i], ftts[i], arr[i]
        if i + 1 < n:
            x2, y2, a2 = fdeps[i + 1], ftts[i + 1], arr[i + 1]
        else:
            x2, y2, a2 = fdeps[0] + PERIOD_MS, ftts[0], a0 + PERIOD_MS
        while gx[jg + 1] <= a1:
            jg += 1
        if a1 == gx[jg]:
            gval = gy[jg]
        else:
            gval = _interp(gx[jg], gy[jg], gx[jg + 1], gy[jg + 1], a1)
        pts.append((x1, y1 + gval))
        while ev < m and lifted[ev][0] <= a1:
            if lifted[ev][0] == a1:
                dirty = True  # g kink lands exactly on this f breakpoint
            ev += 1
        while ev < m and lifted[ev][0] < a2:
            target, tg = lifted[ev]
            ev += 1
            # sigma inverts the (strictly increasing) arrival function on
            # this segment; arrival = departure + travel on it, so f's value
            # there is target - sigma with no second interpolation.
            sigma = _interp(a1, x1, a2, x2, target)
            if sigma >= PERIOD_MS:
                head.append((sigma - PERIOD_MS, target - sigma + tg))
            else:
                pts.append((sigma, target - sigma + tg))
    if head:
        pts = head + pts
    v0 = pts[0][1]
    if all(p[1] == v0 for p in pts):
        return TTF.constant(v0)
    if dirty:
        pts, _ = _prune_cyclic(pts)
    return TTF._raw(pts)


class Dominance(Enum):
    """Outcome of a simulated merge; ties resolve to the first argument."""

    F = "f"
    G = "g"
    CROSSING = "crossing"


def simulated_merge(f: TTF, g: TTF) -> Dominance:
    """Classify min(f, g) without computing any intersection: F when f <= g
    everywhere (ties count for f), G when g undercuts f and f never undercuts
    g, CROSSING otherwise.  Comparisons are cross-product sidedness tests of
    one function's breakpoints against the other's covering segment, which is
    exact and division-free; checking breakpoints of both functions suffices
    because the difference is linear between consecutive union positions.
    Both breakpoint sequences are ascending, so a single merged walk keeps
    each side's covering segment on a cursor instead of searching for it."""
    if f.max_travel <= g.min_travel:
        return Dominance.F
    if g.max_travel < f.min_travel:
        return Dominance.G
    fdeps, ftts = f.deps, f.tts
    gdeps, gtts = g.deps, g.tts
    nf, ng = len(fdeps), len(gdeps)
    f_under = False  # f strictly below g somewhere
    g_under = False
    if ng == 1:  # against a constant, extremes sit on f's breakpoints
        c = gtts[0]
        for t in ftts:
            if t < c:
                f_under = True
            elif t > c:
                g_under = True
    elif nf == 1:
        c = ftts[0]
        for t in gtts:
            if t > c:
                f_under = True
            elif t < c:
                g_under = True
    else:
        # diff carries the sign of f - g at the union position: an f
        # breakpoint against g's covering segment, or g's breakpoint against
        # f's (negated), or the direct difference where departures coincide.
        i = j = 0
        while i < nf and j < ng:
            d = fdeps[i]
            e = gdeps[j]
            if d == e:
                diff = ftts[i] - gtts[j]
                i += 1
                j += 1
            elif d < e:
                if j == 0:
                    x1 = gdeps[-1] - PERIOD_MS
                    y1 = gtts[-1]
                    y2 = gtts[0]
                else:
                    x1 = gdeps[j - 1]
                    y1 = gtts[j - 1]
                    y2 = gtts[j]
                diff = (ftts[i] - y1) * (e - x1) - (y2 - y1) * (d - x1)
                i += 1
            else:
                if i == 0:
                    x1 = fdeps[-1] - PERIOD_MS
                    y1 = ftts[-1]
                    y2 = ftts[0]
                else:
                    x1 = fdeps[i - 1]
                    y1 = ftts[i - 1]
                    y2 = ftts[i]
                diff = (y2 - y1) * (e - x1) - (gtts[j] - y1) * (d - x1)
                j += 1
            if diff < 0:
                if g_under:
                    return Dominance.CROSSING
                f_under = True
            elif diff > 0:
                if f_under:
                    return Dominance.CROSSING
                g_under = True
        if i < nf:  # g exhausted: its trailing wrap segment covers the rest
            x1 = gdeps[-1]
            y1 = gtts[-1]
            dx = gdeps[0] + PERIOD_MS - x1
            dy = gtts[0] - y1
            while i < nf:
                diff = (ftts[i] - y1) * dx - dy * (fdeps[i] - x1)
                i += 1
                if diff < 0:
                    if g_under:
                        return Dominance.CROSSING
                    f_under = True
                elif diff > 0:
                    if f_under:
                        return Dominance.CROSSING
                    g_under = True
        elif j < ng:  # f exhausted: its trailing wrap segment covers the rest
            x1 = fdeps[-1]
            y1 = ftts[-1]
            dx = fdeps[0] + PERIOD_MS - x1
            dy = ftts[0] - y1
            while j < ng:
                diff = dy * (gdeps[j] - x1) - (gtts[j] - y1) * dx
                j += 1
                if diff < 0:
                    if g_under:
                        return Dominance.CROSSING
                    f_under = True
                elif diff > 0:
                    if f_under:
                        return Dominance.CROSSING
                    g_under = True
    if f_under and g_under:
        return Dominance.CROSSING
    if not g_under:
        return Dominance.F
    return Dominance.G


def _union_values(f: TTF, g: TTF):
    """Ascending union of both breakpoint sequences with the exact value of
    each function at every position — a merged walk that keeps a segment
    cursor per side instead of bisecting per position."""
    fdeps, ftts = f.deps, f.tts
    gdeps, gtts = g.deps, g.tts
    nf, ng = len(fdeps), len(gdeps)
    xs: list = []
    fv: list = []
    gv: list = []
    i = j = 0
    while i < nf or j < ng:
        if j >= ng or (i < nf and fdeps[i] <= gdeps[j]):
            x = fdeps[i]
            yf = ftts[i]
            i += 1
            if j < ng and gdeps[j] == x:
                yg = gtts[j]
                j += 1
            elif ng == 1:
                yg = gtts[0]
            elif j == 0:
                yg = _interp(gdeps[-1] - PERIOD_MS, gtts[-1], gdeps[0], gtts[0], x)
            elif j == ng:
                yg = _interp(gdeps[-1], gtts[-1], gdeps[0] + PERIOD_MS, gtts[0], x)
            else:
                yg = _interp(gdeps[j - 1], gtts[j - 1], gdeps[j], gtts[j], x)
        else:
            x = gdeps[j]
            yg = gtts[j]
            j += 1
            if nf == 1:
                yf = ftts[0]
            elif i == 0:
                yf = _interp(fdeps[-1] - PERIOD_MS, ftts[-1], fdeps[0], ftts[0], x)
            elif i == nf:
                yf = _interp(fdeps[-1], ftts[-1], fdeps[0] + PERIOD_MS, ftts[0], x)
            else:
                yf = _interp(fdeps[i - 1], ftts[i - 1], fdeps[i], ftts[i], x)
        xs.append(x)
        fv.append(yf)
        gv.append(yg)
    return xs, fv, gv


def merge(f: TTF, g: TTF) -> tuple[TTF, tuple[str, ...]]:
    """Pointwise minimum of f and g.

    Returns (min-function, provenance) where provenance[i] tags the segment
    that starts at breakpoint i with "f" or "g" — the side the minimum
    follows there, ties going to "f".  A "g" tag therefore appears exactly
    where g strictly improved on f, which is what callers inspect to decide
    whether a tentative label changed anything."""
    xs, fv, gv = _union_values(f, g)
    m = len(xs)
    pts: list[tuple] = []
    prov: list[str] = []
    for i in range(m):
        j = (i + 1) % m
        x1, x2 = xs[i], xs[j] + (PERIOD_MS if j == 0 else 0)
        d1 = fv[i] - gv[i]
        d2 = fv[j] - gv[j]
        if (d1 < 0 and d2 > 0) or (d1 > 0 and d2 < 0):
            x_star = _norm(x1 + _qdiv(d1 * (x2 - x1), d1 - d2))
            v_star = f.value_at(x_star)
            first = "f" if d1 < 0 else "g"
            pts.append((x1, fv[i] if d1 < 0 else gv[i]))
            prov.append(first)
            pts.append((x_star % PERIOD_MS, v_star))
            prov.append("g" if first == "f" else "f")
        else:
            g_strict = d1 > 0 or d2 > 0
            pts.append((x1, gv[i] if g_strict else fv[i]))
            prov.append("g" if g_strict else "f")
    order = sorted(range(len(pts)), key=lambda k: pts[k][0])
    pts = [pts[k] for k in order]
    prov = [prov[k] for k in order]
    v0 = pts[0][1]
    if all(p[1] == v0 for p in pts):
        tag = "g" if "g" in prov else "f"
        return TTF.constant(v0), (tag,)
    pts, prov = _prune_cyclic(pts, prov)
    return TTF._raw(pts), tuple(prov)


def max_abs_difference(f: TTF, g: TTF):
    """Exact maximum of |f - g| over all departure times.

    The difference is piecewise linear between consecutive breakpoints of
    the union (wrap-around segment included), so its extreme values sit on
    union breakpoints — no sampling, no tolerance."""
    if f is g:
        return 0
    best = 0
    _, fv, gv = _union_values(f, g)
    for yf, yg in zip(fv, gv):
        diff = yf - yg
        if diff < 0:
            diff = -diff
        if diff > best:
            best = diff
    return best


def _band(ys, eps):
    los = [_norm(y * (1 - eps)) for y in ys]
    his = [_norm(y * (1 + eps)) for y in ys]
    return los, his


def _chain_scan(xs, ys, los, his, n, start):
    """Generator of (j, feasible) for chords start -> j on the unrolled ring,
    j ascending, stopping once the slope cone from `start` empties.

    Ring index i in [0, 2n] maps to breakpoint i % n shifted by a period when
    i >= n.  A chord start -> j is feasible when the straight segment between
    the two (exact) breakpoints passes through every skipped breakpoint's
    vertical band interval."""
    x0 = xs[start % n] + (PERIOD_MS if start >= n else 0)
    y0 = ys[start % n]
    lo_s = None  # slope cone, both exact rationals once set
    hi_s = None
    limit = start + n
    for j in range(start + 1, limit + 1):
        xj = xs[j % n] + (PERIOD_MS if j >= n else 0) + (PERIOD_MS if j >= 2 * n else 0)
        dx = xj - x0
        s = _qdiv(ys[j % n] - y0, dx)
        ok = (lo_s is None or s >= lo_s) and (hi_s is None or s <= hi_s)
        yield j, ok
        s_lo = _qdiv(los[j % n] - y0, dx)
        s_hi = _qdiv(his[j % n] - y0, dx)
        if lo_s is None or s_lo > lo_s:
            lo_s = s_lo
        if hi_s is None or s_hi < hi_s:
            hi_s = s_hi
        if lo_s > hi_s:
            return


def _min_chain(xs, ys, los, his, n, anchor):
    """Fewest kept breakpoints for a cycle anchored at `anchor`: shortest
    chord chain anchor -> anchor + n over the feasibility DAG (breadth-first,
    each ring node visited once)."""
    goal = anchor + n
    dist = {anchor: 0}
    parent = {}
    frontier = [anchor]
    while frontier:
        nxt = []
        for i in frontier:
            for j, ok in _chain_scan(xs, ys, los, his, n, i):
                if not ok or j in dist or j > goal:
                    continue
                if j == goal:
                    chain = [j]
                    k = i
                    while k != anchor:
                        chain.append(k)
                        k = parent[k]
                    chain.append(anchor)
                    chain.reverse()
                    return chain
                dist[j] = dist[i] + 1
                parent[j] = i
                nxt.append(j)
        frontier = sorted(nxt)
    raise AssertionError("adjacent chords are always feasible")  # pragma: no cover


def _greedy_chain(xs, ys, los, his, n, anchor):
    """Farthest-feasible-first chain for large inputs; near-minimal."""
    goal = anchor + n
    chain = [anchor]
    i = anchor
    while i < goal:
        best = None
        for j, ok in _chain_scan(xs, ys, los, his, n, i):
            if ok and j <= goal:
                best = j
        i = best if best is not None else i + 1
        chain.append(i)
    return chain


_EXACT_ANCHOR_LIMIT = 64


def approximate(f: TTF, eps) -> TTF:
    """Minimum-breakpoint approximation of f inside the symmetric relative
    band |result(tau) - f(tau)| <= eps * f(tau).

    The result keeps a subset of f's breakpoints: the smallest subset whose
    interpolation stays inside the band at every dropped breakpoint.
    (Checking dropped breakpoints suffices — the relative deviation of one
    linear piece against another is extreme at segment ends.)  eps is an
    exact ratio; eps = 0 returns f itself, whose canonical form already has
    no redundant collinear points.  Functions up to 64 points get the exact
    cyclic optimum (every anchor tried); larger ones use farthest-feasible
    chains restarted from each point of a first solution, which may keep a
    point or two more than optimal.  Keeping original breakpoints preserves
    FIFO structurally; a defensive repair pass (`_raise_into_fifo`) guards
    the invariant anyway and falls back to the exact function if it cannot
    mend a violation inside the band."""
    if eps < 0:
        raise ValueError("relative error bound must be non-negative")
    if eps == 0 or f.is_constant:
        return f
    if not isinstance(eps, int):
        eps = _RAT(eps)
    xs, ys = list(f.deps), list(f.tts)
    n = len(xs)
    los, his = _band(ys, eps)
    if n <= _EXACT_ANCHOR_LIMIT:
        best = None
        for anchor in range(n):
            chain = _min_chain(xs, ys, los, his, n, anchor)
            if best is None or len(chain) < len(best):
                best = chain
    else:
        best = _greedy_chain(xs, ys, los, his, n, 0)
        for anchor in sorted({i % n for i in best[:-1]}):
            chain = _greedy_chain(xs, ys, los, his, n, anchor)
            if len(chain) < len(best):
                best = chain
    kept = sorted({i % n for i in best[:-1]})
    if len(kept) == 1:
        result = TTF.constant(ys[kept[0]])
    else:
        result = TTF([(xs[i], ys[i]) for i in kept])
    if not check_fifo(result):  # pragma: no cover - unreachable for subsets
        repaired = _raise_into_fifo(result, f, eps)
        result = repaired if repaired is not None else f
    return result


def _raise_into_fifo(g: TTF, f: TTF, eps):
    """Clamp g's arrival function to be non-decreasing by raising offending
    travel values, staying inside f's relative band; None when impossible."""
    deps = list(g.deps)
    tts = list(g.tts)
    n = len(deps)
    his = [_norm(f.value_at(d) * (1 + eps)) for d in deps]
    for i in range(1, n):
        floor_t = tts[i - 1] - (deps[i] - deps[i - 1])
        if tts[i] < floor_t:
            if floor_t > his[i]:
                return None
            tts[i] = floor_t
    # wrap: arrival at the first point of the next period must not regress
    floor_t = tts[-1] - (deps[0] + PERIOD_MS - deps[-1])
    if tts[0] < floor_t:
        if floor_t > his[0]:
            return None
        tts[0] = _norm(floor_t)
        for i in range(1, n):
            floor_t = tts[i - 1] - (deps[i] - deps[i - 1])
            if tts[i] < floor_t:
                if floor_t > his[i]:
                    return None
                tts[i] = floor_t
    return TTF(list(zip(deps, tts)))
