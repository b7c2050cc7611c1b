"""Fold live-traffic and short-term-prediction changes into a customized
state without redoing full customization.

A batch of partial functions — each valid on a departure horizon of one
arc — is spliced into the arc travel-time functions, then changes climb
the overlay level by level: a multi-target latest-departure search per
touched cell finds the boundary vertices from which an updated arc is
still reachable in time (everything else keeps its shortcuts), profile
searches rerun from those vertices only, and slots whose profile actually
changed are replaced in place.  The departure intervals where replaced
shortcuts differ become the horizons that seed the next level.  When
shortcuts are stored approximated, a change is propagated only if it is
significant — its maximum pointwise difference exceeds the batch's
threshold — and replaced slots are re-approximated with the level's
tolerance so update results age the same way customization results do.

Partial application never happens: every update is spliced and
FIFO-checked before the first slot is touched, so a rejected batch leaves
the state byte-identical.

Departures before the batch's `now` are deliberately treated as stale:
affected-vertex marking cuts off below `now`, matching the operational
reading that the past needs no re-routing.  Equivalence with a full
recustomization therefore holds for batches with `now` at the period
start (and update horizons clear of the wrap-around), which is how the
equivalence suites drive it.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field

from .customization import SearchCounters, cell_adjacency, parse_eps, _source_row
from .network import FifoViolationError, latest_feasible_departure
from .overlay import SLOT_INF, SLOT_UNSET, OverlayStateError
from .plf import PERIOD_MS, TTF, approximate, check_fifo, max_abs_difference

__all__ = [
    "PartialUpdate",
    "UpdateBatch",
    "ChangeSet",
    "UpdateStats",
    "UpdateFormatError",
    "splice",
    "mark_affected",
    "apply_update_batch",
    "load_updates",
    "save_updates",
    "generate_updates",
]


class UpdateFormatError(ValueError):
    """Update file or update batch malformed."""


@dataclass(frozen=True)
class PartialUpdate:
    """New travel-time values for one arc on one departure horizon.

    points are (departure, travel) pairs strictly inside the horizon with
    strictly increasing integer departures; the spliced function passes
    through them and meets the base function at both horizon ends.
    """

    tail: int
    head: int
    horizon: tuple
    points: tuple

    def validate(self) -> None:
        lo, hi = self.horizon
        if not (isinstance(lo, int) and isinstance(hi, int)):
            raise UpdateFormatError("horizon ends must be integer ms")
        if not 0 <= lo < hi < PERIOD_MS:
            raise UpdateFormatError(
                f"horizon [{lo}, {hi}] must satisfy 0 <= lo < hi < {PERIOD_MS}"
            )
        if not self.points:
            raise UpdateFormatError("a partial update needs at least one point")
        prev = lo
        for d, t in self.points:
            if not (isinstance(d, int) and isinstance(t, int)):
                raise UpdateFormatError("update points must be integer ms")
            if d <= prev:
                raise UpdateFormatError(
                    "update departures must be strictly increasing and "
                    f"strictly inside the horizon (got {d})"
                )
            if t < 0:
                raise UpdateFormatError(f"negative travel time {t}")
            prev = d
        if prev >= hi:
            raise UpdateFormatError(
                f"update departure {prev} must lie strictly before the "
                f"horizon end {hi}"
            )


@dataclass(frozen=True)
class UpdateBatch:
    """Updates applied together at one point in time.

    now: departures before it are not re-routed; must precede every
    horizon end.  significance_threshold: minimum max-pointwise profile
    difference (ms) for a change to approximated shortcuts to propagate.
    """

    updates: tuple
    now: int = 0
    significance_threshold: int = 1_000

    def validate(self) -> None:
        if not self.updates:
            raise UpdateFormatError("update batch is empty")
        for u in self.updates:
            u.validate()
            if self.now >= u.horizon[1]:
                raise UpdateFormatError(
                    f"batch time {self.now} is not before horizon end "
                    f"{u.horizon[1]} of arc {u.tail}->{u.head}"
                )
        if self.significance_threshold < 0:
            raise UpdateFormatError("significance threshold must be >= 0")


@dataclass
class ChangeSet:
    """What one batch touched: per (level, cell) the affected boundary
    vertices, and per replaced shortcut (level, tail, head) the departure
    interval hull on which the stored profile changed."""

    affected: dict = field(default_factory=dict)
    intervals: dict = field(default_factory=dict)

    def is_empty(self) -> bool:
        return not self.intervals and not any(self.affected.values())


@dataclass
class UpdateStats:
    spliced_arcs: int = 0
    cells_touched: int = 0
    profile_searches: int = 0
    slots_inspected: int = 0
    slots_replaced: int = 0
    counters: SearchCounters = field(default_factory=SearchCounters)


# ------------------------------------------------------------------- splicing


def splice(base: TTF, upd: PartialUpdate) -> TTF:
    """The base function with the update's values on its horizon.

    Breakpoints at both horizon ends evaluate the base function, so the
    result joins the surrounding profile continuously; the update's own
    points sit strictly between them.  The spliced function is FIFO-checked
    and rejected outright on a violation.
    """
    upd.validate()
    lo, hi = upd.horizon
    pts = [(d, t) for d, t in base.points if d < lo]
    pts.append((lo, base.value_at(lo)))
    pts.extend(upd.points)
    pts.append((hi, base.value_at(hi)))
    pts.extend((d, t) for d, t in base.points if d > hi)
    out = TTF(pts)
    if not check_fifo(out):
        raise FifoViolationError(
            f"update on arc {upd.tail}->{upd.head} horizon {upd.horizon} "
            "would let a later departure arrive earlier"
        )
    return out


# ------------------------------------------------------- affected-vertex marking


def _latest_departure_view(adj, seeds, floor):
    """Latest departure per vertex reaching some seed by its deadline, over
    a restricted search-graph view (see cell_adjacency); labels below
    `floor` are cut off.  Max-label-setting on reverse arcs, like the
    whole-network variant, but over the view's arcs."""
    radj = {}
    for u, lst in adj.items():
        for w, f, _, _, _ in lst:
            radj.setdefault(w, []).append((u, f))
    labels = {}
    for v, deadline in seeds:
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
        for w, f in radj.get(u, ()):
            if w in settled:
                continue
            sigma = latest_feasible_departure(f, d)
            if w not in labels or sigma > labels[w]:
                labels[w] = sigma
                heapq.heappush(heap, (-sigma, w))
    return settled


def mark_affected(net, topo, pool, level, cell, seeds, now):
    """Boundary vertices of the cell from which an updated arc is still
    reachable in time: multi-target latest-departure search over the
    cell-restricted finer search graph, seeded at the updated arcs' tails
    with their horizon ends, cut off below `now`.  Returns
    {boundary vertex: latest departure}, every label >= now.
    """
    adj = cell_adjacency(net, topo, pool, level, cell)
    labels = _latest_departure_view(adj, seeds, now)
    index = topo.matrix(level, cell).index_of
    return {v: d for v, d in labels.items() if v in index}


# ------------------------------------------------------------ batch application


def _diff_hull(old: TTF, new: TTF):
    """Departure interval hull on which two functions differ: the marked
    union breakpoints extended one neighbour outward (a sign change between
    two union breakpoints lies strictly between them)."""
    ds = sorted(set(old.deps) | set(new.deps))
    marks = [i for i, d in enumerate(ds) if old.value_at(d) != new.value_at(d)]
    if not marks:
        return None
    if marks[0] == 0 and marks[-1] == len(ds) - 1:
        return (0, PERIOD_MS - 1)  # difference spans the wrap-around
    lo = ds[max(marks[0] - 1, 0)]
    hi = ds[min(marks[-1] + 1, len(ds) - 1)]
    return (lo, hi)


def _lowest_common_level(part, u, v):
    """Smallest level whose cells contain both endpoints; None when they
    differ even at the top."""
    for level in range(1, part.level_count + 1):
        if part.cell(level, u) == part.cell(level, v):
            return level
    return None


def apply_update_batch(state, batch: UpdateBatch):
    """Splice the batch into the network and re-customize only what it can
    influence.  Mutates state.net and the function pool in place; returns
    (ChangeSet, UpdateStats).  A FIFO-violating update aborts the whole
    batch before any state changes.
    """
    batch.validate()
    net, part, topo, pool = state.net, state.part, state.topo, state.pool
    cfg = state.config
    stats = UpdateStats()
    changes = ChangeSet()

    # Phase 1: splice and validate everything before touching any state.
    replacements = {}
    for upd in batch.updates:
        ids = net.arc_ids(upd.tail, upd.head)
        if not ids:
            raise UpdateFormatError(f"no arc {upd.tail}->{upd.head} in the network")
        for arc_id in ids:
            base = replacements.get(arc_id, net.arcs[arc_id][2])
            replacements[arc_id] = splice(base, upd)

    # Drop no-op splices entirely: they can influence nothing.
    changed = {
        arc_id: f for arc_id, f in replacements.items() if f != net.arcs[arc_id][2]
    }
    if not changed:
        return changes, stats
    old_net = net
    net = old_net.with_replaced_arcs(changed)
    state.net = net
    stats.spliced_arcs = len(changed)

    # Seeds per (level, cell): tails of updated arcs with their deadlines,
    # entering at the lowest level whose cell contains the whole arc.
    pending = [dict() for _ in range(part.level_count + 1)]  # 1-based by level
    for upd in batch.updates:
        arc_ids = [i for i in net.arc_ids(upd.tail, upd.head) if i in changed]
        if not arc_ids:
            continue
        level = _lowest_common_level(part, upd.tail, upd.head)
        if level is None:
            continue  # crosses even the top level: no shortcut contains it
        cell = part.cell(level, upd.tail)
        pending[level].setdefault(cell, []).append((upd.tail, upd.horizon[1]))

    eps_levels = [parse_eps(e) for e in cfg.eps_per_level]
    for level in range(1, part.level_count + 1):
        for cell in sorted(pending[level]):
            seeds = pending[level][cell]
            affected = mark_affected(net, topo, pool, level, cell, seeds, batch.now)
            changes.affected[(level, cell)] = tuple(sorted(affected))
            if not affected:
                continue
            stats.cells_touched += 1
            view = cell_adjacency(net, topo, pool, level, cell)
            m = topo.matrix(level, cell)
            eps = eps_levels[level - 1]
            cell_hi = None
            changed_tails = []
            for src in sorted(affected):
                row = _source_row(src, view, topo, level, cfg, stats.counters)
                stats.profile_searches += 1
                i = m.index_of[src]
                src_changed = False
                for j, new_f in row:
                    stats.slots_inspected += 1
                    ref = m.slot(i, j)
                    if new_f is None:
                        if ref != SLOT_INF:
                            raise OverlayStateError(
                                f"level-{level} shortcut {src}->"
                                f"{m.vertices[j]} became unreachable — "
                                "updates cannot change reachability"
                            )
                        continue
                    if ref == SLOT_INF:
                        raise OverlayStateError(
                            f"level-{level} shortcut {src}->{m.vertices[j]} "
                            "became reachable — updates cannot change "
                            "reachability"
                        )
                    if ref == SLOT_UNSET:
                        raise OverlayStateError(
                            f"level-{level} cell {cell} updated before "
                            "customization"
                        )
                    old_f = pool[ref]
                    if eps:
                        if max_abs_difference(old_f, new_f) <= batch.significance_threshold:
                            continue
                        store = approximate(new_f, eps)
                    else:
                        if new_f == old_f:
                            continue
                        store = new_f
                    hull = _diff_hull(old_f, store)
                    if hull is None:
                        continue  # re-approximation landed on the same function
                    pool.replace(ref, store)
                    stats.slots_replaced += 1
                    changes.intervals[(level, src, m.vertices[j])] = hull
                    src_changed = True
                    cell_hi = hull[1] if cell_hi is None else max(cell_hi, hull[1])
                if src_changed:
                    changed_tails.append(src)
            if changed_tails and level < part.level_count:
                parent = part.cell(level + 1, changed_tails[0])
                up = pending[level + 1].setdefault(parent, [])
                up.extend((u, cell_hi) for u in changed_tails)
    return changes, stats


# ---------------------------------------------------------------- file format


def load_updates(path, significance_threshold: int = 1_000) -> UpdateBatch:
    """Parse a `tdu` update file (see save_updates for the layout)."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise UpdateFormatError("empty update file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "tdu":
        raise UpdateFormatError(f"bad header: {lines[0]!r}")
    if head[1] != "1":
        raise UpdateFormatError(f"unsupported update format version {head[1]}")
    try:
        count, now = int(head[2]), int(head[3])
    except ValueError:
        raise UpdateFormatError(f"bad header: {lines[0]!r}") from None
    if len(lines) - 1 != count:
        raise UpdateFormatError(
            f"header declares {count} updates, file has {len(lines) - 1}"
        )
    updates = []
    for lineno, ln in enumerate(lines[1:], start=2):
        toks = ln.split()
        if toks[0] != "u":
            raise UpdateFormatError(f"line {lineno}: expected 'u', got {toks[0]!r}")
        try:
            vals = [int(t) for t in toks[1:]]
        except ValueError:
            raise UpdateFormatError(f"line {lineno}: non-integer field") from None
        if len(vals) < 5:
            raise UpdateFormatError(f"line {lineno}: truncated update record")
        tail, head_v, lo, hi, k = vals[:5]
        if len(vals) != 5 + 2 * k:
            raise UpdateFormatError(
                f"line {lineno}: expected {k} points, got {(len(vals) - 5) / 2}"
            )
        pts = tuple(zip(vals[5::2], vals[6::2]))
        upd = PartialUpdate(tail, head_v, (lo, hi), pts)
        try:
            upd.validate()
        except UpdateFormatError as exc:
            raise UpdateFormatError(f"line {lineno}: {exc}") from None
        updates.append(upd)
    batch = UpdateBatch(tuple(updates), now, significance_threshold)
    batch.validate()
    return batch


def save_updates(batch: UpdateBatch, path) -> None:
    """Write a batch as a `tdu` file — line 1 `tdu 1 <count> <now_ms>`,
    then one `u <tail> <head> <lo> <hi> <k> <dep tt>...` per update."""
    lines = [f"tdu 1 {len(batch.updates)} {batch.now}"]
    for u in batch.updates:
        flat = " ".join(f"{d} {t}" for d, t in u.points)
        lines.append(
            f"u {u.tail} {u.head} {u.horizon[0]} {u.horizon[1]} {len(u.points)} {flat}"
        )
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def generate_updates(
    net,
    count: int,
    seed: int,
    now: int = 0,
    significance_threshold: int = 1_000,
) -> UpdateBatch:
    """Deterministic pseudo-random congestion batch for drills: distinct
    arcs get a slowdown bump (1.2–3x the current value) on a mid-day
    horizon, pre-checked against FIFO so the batch always applies."""
    rng = random.Random(seed)
    if count > net.arc_count:
        raise UpdateFormatError(
            f"cannot pick {count} distinct arcs from {net.arc_count}"
        )
    chosen = rng.sample(range(net.arc_count), count)
    updates = []
    for arc_id in chosen:
        tail, head, base = net.arcs[arc_id]
        lo = rng.randrange(4 * 3_600_000, 20 * 3_600_000, 60_000)
        width = rng.randrange(1_800_000, 10_800_000, 60_000)
        hi = min(lo + width, PERIOD_MS - 3_600_000)
        k = rng.randint(1, 4)
        deps = sorted(rng.sample(range(lo + 60_000, hi, 60_000), k))
        factor = 1.2 + rng.random() * 1.8
        raw = [int(base.value_ms(d) * factor) for d in deps]
        # Cap each value so no departure beats a later one to the exit
        # seam: t_i <= t_next + gap, walked backward from (hi, base(hi)).
        # The base function's own FIFO bound keeps every cap >= base, so
        # the repaired bump stays a slowdown and the splice always passes.
        limit, at = base.value_at(hi), hi
        pts = [None] * k
        for i in reversed(range(k)):
            cap = int(limit + (at - deps[i]))
            t = raw[i] if raw[i] <= cap else cap
            pts[i] = (deps[i], t)
            limit, at = t, deps[i]
        upd = PartialUpdate(tail, head, (lo, hi), tuple(pts))
        splice(base, upd)  # construction guarantees FIFO; fail loudly if not
        updates.append(upd)
    batch = UpdateBatch(tuple(updates), now, significance_threshold)
    batch.validate()
    return batch
