"""Road-network model, text I/O, synthetic instances, and the reference
search algorithms everything else is verified against.

The three searches here — earliest-arrival Dijkstra, profile search, and
latest-departure search — are deliberately plain: no pruning, no overlay
awareness, no approximation.  They are the oracles.  The engine's fast
paths must agree with them exactly, so they favor clarity over speed and
carry exact (rational-capable) labels throughout.
"""

from __future__ import annotations

import bisect
import heapq
import random
from dataclasses import dataclass, field
from fractions import Fraction

from .plf import PERIOD_MS, TTF, ZERO, _qdiv, check_fifo, link, merge, round_half_up

__all__ = [
    "RoadNetwork",
    "NetworkFormatError",
    "FifoViolationError",
    "EAResult",
    "load_network",
    "save_network",
    "generate_synthetic",
    "td_dijkstra_ea",
    "profile_dijkstra",
    "latest_departure",
    "latest_feasible_departure",
]


class NetworkFormatError(ValueError):
    """Malformed network/partition/update input; message carries the line."""


class FifoViolationError(ValueError):
    """An arc's travel-time function lets a later departure arrive earlier."""


class RoadNetwork:
    """Directed graph with a travel-time function per arc.

    Arcs are kept sorted by (tail, head) so that identical inputs produce
    identical adjacency layouts regardless of construction order; arc ids
    index into that sorted list.  The structure is immutable by convention —
    live updates build a replacement via `with_replaced_arcs`.
    """

    __slots__ = ("vertex_count", "arcs", "forward", "reverse", "coords", "_pair_index")

    def __init__(self, vertex_count: int, arcs, coords=None):
        self.vertex_count = vertex_count
        self.arcs = sorted(((t, h, f) for t, h, f in arcs), key=lambda a: (a[0], a[1]))
        self.forward = [[] for _ in range(vertex_count)]
        self.reverse = [[] for _ in range(vertex_count)]
        for arc_id, (tail, head, f) in enumerate(self.arcs):
            if not (0 <= tail < vertex_count and 0 <= head < vertex_count):
                raise NetworkFormatError(f"arc {tail}->{head} references unknown vertex")
            self.forward[tail].append((head, f, arc_id))
            self.reverse[head].append((tail, f, arc_id))
        self.coords = list(coords) if coords is not None else None
        self._pair_index = None

    @property
    def arc_count(self) -> int:
        return len(self.arcs)

    def arc_ids(self, tail: int, head: int) -> list[int]:
        """All arc ids from tail to head (parallel arcs share the pair)."""
        if self._pair_index is None:
            index: dict = {}
            for arc_id, (t, h, _) in enumerate(self.arcs):
                index.setdefault((t, h), []).append(arc_id)
            self._pair_index = index
        return self._pair_index.get((tail, head), [])

    def with_replaced_arcs(self, replacements: dict[int, TTF]) -> "RoadNetwork":
        """Copy of the network with the given arc ids carrying new TTFs."""
        arcs = [
            (t, h, replacements.get(i, f))
            for i, (t, h, f) in enumerate(self.arcs)
        ]
        return RoadNetwork(self.vertex_count, arcs, self.coords)


# ------------------------------------------------------------------- file I/O


def _parse_int(token: str, lineno: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise NetworkFormatError(f"line {lineno}: {what} is not an integer: {token!r}") from None


def load_network(path) -> RoadNetwork:
    """Read a `tdgr` text file.

    Format: header `tdgr 1 <n> <m> <period_ms>`, then `a <tail> <head> <k>
    <dep_1> <tt_1> ... <dep_k> <tt_k>` per arc and optional `v <id> <lat>
    <lon>` coordinate lines (microdegrees).  Lines starting with `c` are
    comments.  Departures must be strictly increasing in [0, period), travel
    times positive, and every arc function must satisfy FIFO.
    """
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    header = None
    lineno = 0
    for lineno, line in enumerate(lines, start=1):
        t = line.split()
        if not t or t[0] == "c":
            continue
        header = t
        break
    if header is None or header[0] != "tdgr":
        raise NetworkFormatError(f"line {lineno or 1}: missing `tdgr` header")
    if len(header) != 5 or header[1] != "1":
        raise NetworkFormatError(f"line {lineno}: bad header {' '.join(header)!r}")
    n = _parse_int(header[2], lineno, "vertex count")
    m = _parse_int(header[3], lineno, "arc count")
    period = _parse_int(header[4], lineno, "period")
    if period != PERIOD_MS:
        raise NetworkFormatError(
            f"line {lineno}: unsupported period {period} (engine is fixed at {PERIOD_MS})"
        )
    arcs = []
    coords = {}
    for lno, line in enumerate(lines[lineno:], start=lineno + 1):
        tokens = line.split()
        if not tokens or tokens[0] == "c":
            continue
        if tokens[0] == "a":
            if len(tokens) < 4:
                raise NetworkFormatError(f"line {lno}: truncated arc line")
            tail = _parse_int(tokens[1], lno, "arc tail")
            head = _parse_int(tokens[2], lno, "arc head")
            k = _parse_int(tokens[3], lno, "breakpoint count")
            if k < 1 or len(tokens) != 4 + 2 * k:
                raise NetworkFormatError(
                    f"line {lno}: expected {2 * k} breakpoint fields, got {len(tokens) - 4}"
                )
            pts = []
            for i in range(k):
                dep = _parse_int(tokens[4 + 2 * i], lno, "departure")
                tt = _parse_int(tokens[5 + 2 * i], lno, "travel time")
                if not 0 <= dep < PERIOD_MS:
                    raise NetworkFormatError(f"line {lno}: departure {dep} outside the period")
                if tt <= 0:
                    raise NetworkFormatError(f"line {lno}: travel time must be positive")
                pts.append((dep, tt))
            if any(pts[i][0] >= pts[i + 1][0] for i in range(k - 1)):
                raise NetworkFormatError(f"line {lno}: departures not strictly increasing")
            f = TTF(pts)
            if not check_fifo(f):
                raise FifoViolationError(
                    f"line {lno}: arc {tail}->{head} violates FIFO"
                )
            arcs.append((tail, head, f))
        elif tokens[0] == "v":
            if len(tokens) != 4:
                raise NetworkFormatError(f"line {lno}: bad coordinate line")
            vid = _parse_int(tokens[1], lno, "vertex id")
            coords[vid] = (
                _parse_int(tokens[2], lno, "latitude"),
                _parse_int(tokens[3], lno, "longitude"),
            )
        else:
            raise NetworkFormatError(f"line {lno}: unknown record {tokens[0]!r}")
    if len(arcs) != m:
        raise NetworkFormatError(f"header promised {m} arcs, file has {len(arcs)}")
    coord_list = None
    if coords:
        coord_list = [coords.get(v, (0, 0)) for v in range(n)]
    return RoadNetwork(n, arcs, coord_list)


def save_network(net: RoadNetwork, path) -> None:
    """Write the canonical `tdgr` form: header, arcs sorted by (tail, head),
    then coordinates.  Round-trips through load_network bit-for-bit."""
    out = [f"tdgr 1 {net.vertex_count} {net.arc_count} {PERIOD_MS}"]
    for tail, head, f in net.arcs:
        fields = [f"a {tail} {head} {len(f)}"]
        for d, t in f.points:
            fields.append(f"{d} {t}")
        out.append(" ".join(fields))
    if net.coords is not None:
        for v, (lat, lon) in enumerate(net.coords):
            out.append(f"v {v} {lat} {lon}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(out) + "\n")


# ------------------------------------------------------------------ generator


def _tent(t: int, center: int, width: int, amp: int) -> int:
    rise = amp - amp * abs(t - center) // width
    return rise if rise > 0 else 0


def _daily_ttf(rng: random.Random, base: int, k: int) -> TTF:
    """Integer-only daily travel-time shape: base cost plus a morning and an
    evening tent-shaped peak, light noise, breakpoints jittered around a
    uniform grid.  Slopes stay tiny relative to 1, so FIFO holds by
    construction (asserted anyway by callers)."""
    spacing = PERIOD_MS // k
    jit = spacing // 4
    deps = [i * spacing + spacing // 2 + rng.randrange(-jit, jit + 1) for i in range(k)]
    c1 = 28_800_000 + rng.randrange(-3_600_000, 3_600_001)  # around 08:00
    c2 = 63_000_000 + rng.randrange(-3_600_000, 3_600_001)  # around 17:30
    w1 = rng.randrange(7_200_000, 14_400_001)
    w2 = rng.randrange(7_200_000, 14_400_001)
    a1 = base * rng.randrange(30, 121) // 100
    a2 = base * rng.randrange(30, 121) // 100
    tts = [
        base + _tent(d, c1, w1, a1) + _tent(d, c2, w2, a2) + rng.randrange(base // 50 + 1)
        for d in deps
    ]
    if len(set(tts)) == 1:
        tts[k // 2] += 1_000  # keep the arc genuinely time-dependent
    return TTF(list(zip(deps, tts)))


def generate_synthetic(
    width: int,
    height: int,
    td_fraction,
    bps_per_td_arc: int,
    seed: int,
) -> RoadNetwork:
    """Deterministic grid instance: bidirected grid arcs, an exact
    td_fraction share of them time-dependent with bps_per_td_arc breakpoints,
    the rest constant.  Pure integer arithmetic end to end, so the same seed
    yields the same network on any platform."""
    n = width * height
    if n < 2:
        raise ValueError("need at least two vertices")
    pairs = []
    for y in range(height):
        for x in range(width):
            v = y * width + x
            if x + 1 < width:
                pairs.append((v, v + 1))
            if y + 1 < height:
                pairs.append((v, v + width))
    arc_ends = []
    for u, v in pairs:
        arc_ends.append((u, v))
        arc_ends.append((v, u))
    arc_ends.sort()
    m = len(arc_ends)
    rng = random.Random(seed)
    td_count = round_half_up(Fraction(td_fraction) * m)
    td_ids = set(rng.sample(range(m), td_count))
    arcs = []
    for i, (tail, head) in enumerate(arc_ends):
        base = rng.randrange(175, 549) ** 2  # ~30s .. ~5min, skewed low
        if i in td_ids:
            f = _daily_ttf(rng, base, bps_per_td_arc)
        else:
            f = TTF.constant(base)
        arcs.append((tail, head, f))
    coords = [(y * 1_000, x * 1_000) for y in range(height) for x in range(width)]
    return RoadNetwork(n, arcs, coords)


# ----------------------------------------------------------- reference search


@dataclass
class EAResult:
    """Earliest-arrival search outcome; labels hold exact arrival times for
    every settled vertex (None target arrival means unreachable)."""

    arrival: object
    parent: dict = field(default_factory=dict)
    labels: dict = field(default_factory=dict)
    scanned: int = 0

    @property
    def arrival_ms(self):
        return None if self.arrival is None else round_half_up(self.arrival)


def td_dijkstra_ea(net, s: int, t, tau, restriction=None, trace=None) -> EAResult:
    """Time-dependent Dijkstra from s departing at tau; label-setting, which
    FIFO makes safe.  `t=None` computes the full tree.  `restriction`
    confines the search to a vertex set.  `trace` (a list, test hook)
    collects extraction keys."""
    dist = {s: tau}
    parent = {}
    settled = set()
    heap = [(tau, s)]
    scanned = 0
    while heap:
        d, u = heapq.heappop(heap)
        if u in settled or d != dist[u]:
            continue
        settled.add(u)
        scanned += 1
        if trace is not None:
            trace.append(d)
        if u == t:
            break
        for v, f, _ in net.forward[u]:
            if v in settled or (restriction is not None and v not in restriction):
                continue
            a = d + f.value_at(d)
            if v not in dist or a < dist[v]:
                dist[v] = a
                parent[v] = u
                heapq.heappush(heap, (a, v))
    arrival = dist[t] if t is not None and t in settled else None
    labels = {v: dist[v] for v in settled}
    return EAResult(arrival, parent, labels, scanned)


def profile_dijkstra(net, s: int, targets, restriction=None) -> dict:
    """Exact travel-time profiles from s to each target over all departure
    times: label-correcting search with function-valued labels, queue keyed
    on the label's minimum (ties by vertex id).  A merge improves a label
    exactly when some segment of the minimum comes from the new function,
    which the merge provenance reports directly."""
    labels = {s: ZERO}
    heap = [(0, s)]
    while heap:
        key, u = heapq.heappop(heap)
        fu = labels[u]
        if key > fu.min_travel:
            continue  # stale entry
        for v, f_arc, _ in net.forward[u]:
            if restriction is not None and v not in restriction:
                continue
            g = link(fu, f_arc)
            old = labels.get(v)
            if old is None:
                labels[v] = g
                heapq.heappush(heap, (g.min_travel, v))
                continue
            merged, prov = merge(old, g)
            if "g" in prov:
                labels[v] = merged
                heapq.heappush(heap, (merged.min_travel, v))
    return {v: labels[v] for v in targets if v in labels}


def latest_feasible_departure(f: TTF, deadline):
    """Largest sigma with sigma + f(sigma) <= deadline, on the absolute time
    axis (the result may be negative or beyond one period — it is not reduced).
    Exact: the arrival function is non-decreasing and piecewise linear, so
    this is a right-inverse evaluated by bisecting arrival values."""
    if f.is_constant:
        return deadline - f.tts[0]
    deps, tts = f.deps, f.tts
    n = len(deps)
    arr = [deps[i] + tts[i] for i in range(n)]
    a0 = arr[0]
    span = deadline - a0
    if isinstance(span, int):
        k = span // PERIOD_MS
    else:  # floor(span / period) for exact rationals
        k = int(span.numerator // (span.denominator * PERIOD_MS))
    target = deadline - k * PERIOD_MS  # lies in [a0, a0 + period)
    i = bisect.bisect_right(arr, target) - 1
    sigma_i, arr_i = deps[i], arr[i]
    if target == arr_i:
        return sigma_i + k * PERIOD_MS
    if i + 1 < n:
        sigma_next, arr_next = deps[i + 1], arr[i + 1]
    else:
        sigma_next, arr_next = deps[0] + PERIOD_MS, a0 + PERIOD_MS
    # target < arr_next by choice of i and k, so the segment strictly rises
    sigma = sigma_i + _qdiv((target - arr_i) * (sigma_next - sigma_i), arr_next - arr_i)
    return sigma + k * PERIOD_MS


def latest_departure(net, sources, floor, restriction=None, trace=None) -> dict:
    """Latest departure per vertex reaching some source by its deadline:
    max-label-setting over reverse arcs, extraction in decreasing label
    order, cut off once the top label drops below `floor`.  Returns exact
    labels for every vertex settled at or above the floor."""
    labels = {}
    for v, deadline in sources:
        if v not in labels or deadline > labels[v]:
            labels[v] = deadline
    heap = [(-d, v) for v, d in labels.items()]
    heapq.heapify(heap)
    settled = {}
    while heap:
        negd, u = heapq.heappop(heap)
        d = -negd
        if u in settled or d != labels[u]:
            continue
        if d < floor:
            break
        settled[u] = d
        if trace is not None:
            trace.append(d)
        for w, f_arc, _ in net.reverse[u]:
            if w in settled or (restriction is not None and w not in restriction):
                continue
            sigma = latest_feasible_departure(f_arc, d)
            if w not in labels or sigma > labels[w]:
                labels[w] = sigma
                heapq.heappush(heap, (-sigma, w))
    return settled
