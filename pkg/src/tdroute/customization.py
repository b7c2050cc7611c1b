"""Metric customization: fill every overlay shortcut slot, level by level,
with the travel-time profile between its cell's boundary vertices, then
simplify each finished level within its configured error bound.

Level ℓ shortcuts are computed by label-correcting profile searches over
the level-(ℓ−1) search graph restricted to the enclosing level-ℓ cell:
original arcs inside the cell at ℓ = 1, finer clique arcs plus the
crossing arcs between subcells above.  Six accelerations — pre-link bound
pruning, constant fast paths, post-link bound checks, the simulated
merge, hopping reduction, and clique flags — can each be toggled
independently; in exact mode none of them changes any output, which the
test suite verifies against un-accelerated searches and against plain
profile searches on the original graph.

Work is scheduled per boundary vertex: workers claim sources from a
shared cursor, buffer their rows locally, and a sequential merge phase
writes the pool in ascending source order, so the pool is bit-identical
for any worker count.
"""

from __future__ import annotations

import heapq
import threading
from dataclasses import dataclass, field, fields
from fractions import Fraction
from time import perf_counter

from .overlay import (
    SLOT_INF,
    SLOT_UNSET,
    FunctionPool,
    OverlayStateError,
    OverlayTopology,
)
from .plf import TTF, ZERO, Dominance, approximate, link, merge, simulated_merge

__all__ = [
    "CustomizationConfig",
    "CustomizationStats",
    "LevelStats",
    "SearchCounters",
    "parse_eps",
    "customize",
    "profile_search_cell",
    "approximate_level",
    "merge_worker_outputs",
]


def parse_eps(value):
    """Exact relative error bound from an int, string, or Fraction.

    Decimal strings parse exactly ("0.01" → 1/100); integral values
    collapse to plain ints so that 0 means exact mode everywhere.
    """
    q = value if isinstance(value, int) else Fraction(value)
    if q < 0:
        raise ValueError(f"relative error bound must be non-negative, got {value!r}")
    return int(q) if not isinstance(q, int) and q.denominator == 1 else q


@dataclass(frozen=True)
class CustomizationConfig:
    """Per-level error bounds plus the acceleration toggles.

    Every toggle defaults to on; each can be disabled independently, which
    must not change any exact-mode output (that property is part of the
    acceptance suite).
    """

    eps_per_level: tuple = ()
    bound_pruning: bool = True
    constant_fast_paths: bool = True
    post_link_bounds: bool = True
    simulated_merge: bool = True
    hopping_reduction: bool = True
    clique_flags: bool = True
    worker_count: int = 1

    @classmethod
    def exact(cls, levels: int, **kw) -> "CustomizationConfig":
        return cls(eps_per_level=(0,) * levels, **kw)

    @classmethod
    def uniform(cls, levels: int, eps, **kw) -> "CustomizationConfig":
        return cls(eps_per_level=(eps,) * levels, **kw)

    def eps_for(self, level: int):
        return parse_eps(self.eps_per_level[level - 1])

    def validate(self, levels: int) -> None:
        if len(self.eps_per_level) != levels:
            raise ValueError(
                f"{len(self.eps_per_level)} error bounds for {levels} levels"
            )
        for level in range(1, levels + 1):
            self.eps_for(level)
        if self.worker_count < 1:
            raise ValueError("worker_count must be at least 1")


@dataclass
class SearchCounters:
    """Operation counts across profile searches (summed over workers)."""

    scans: int = 0
    links: int = 0
    true_merges: int = 0
    simulated_merges: int = 0
    pruned_before_link: int = 0
    discarded_after_link: int = 0
    replaced_after_link: int = 0
    hops_skipped: int = 0
    flag_suppressed: int = 0

    def add(self, other: "SearchCounters") -> None:
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))


@dataclass
class LevelStats:
    """One per-level stats row: total breakpoints over time-dependent
    shortcuts, their share of all clique slots, their average complexity,
    and the wall time spent on the level."""

    level: int
    bps: int
    td_clq_arcs_pct: float
    td_arc_cplx: float
    time_s: float


CSV_HEADER = "level,bps,td_clq_arcs_pct,td_arc_cplx,time_s"


@dataclass
class CustomizationStats:
    rows: list
    counters: SearchCounters = field(default_factory=SearchCounters)

    def total_breakpoints(self) -> int:
        return sum(r.bps for r in self.rows)

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        for r in self.rows:
            lines.append(
                f"{r.level},{r.bps},{r.td_clq_arcs_pct:.4f},"
                f"{r.td_arc_cplx:.4f},{r.time_s:.6f}"
            )
        return "\n".join(lines) + "\n"

    def verify_against(self, topo: OverlayTopology, pool: FunctionPool) -> None:
        """Re-derive every non-timing figure from the pool; raise on drift."""
        for row in self.rows:
            bps, pct, cplx = recount_level(topo, pool, row.level)
            if (bps, pct, cplx) != (row.bps, row.td_clq_arcs_pct, row.td_arc_cplx):
                raise OverlayStateError(
                    f"level {row.level} stats drifted: recorded "
                    f"({row.bps}, {row.td_clq_arcs_pct}, {row.td_arc_cplx}), "
                    f"recounted ({bps}, {pct}, {cplx})"
                )


def recount_level(topo: OverlayTopology, pool: FunctionPool, level: int):
    """(bps, td_clq_arcs_pct, td_arc_cplx) recomputed from the pool."""
    refs = topo.level_refs(level)
    slot_total = sum(m.size * (m.size - 1) for m in topo.matrices[level - 1])
    td = [pool[r] for r in refs if not pool[r].is_constant]
    bps = sum(len(f.deps) for f in td)
    pct = 100.0 * len(td) / slot_total if slot_total else 0.0
    cplx = bps / len(td) if td else 0.0
    return bps, pct, cplx


# ------------------------------------------------------------- search graphs


def cell_adjacency(net, topo: OverlayTopology, pool: FunctionPool, level: int, cell: int):
    """Out-arc lists of the level-(ℓ−1) search graph restricted to one
    level-ℓ cell: u → [(head, ttf, min, max, is_clique)].

    At ℓ = 1 these are the original arcs staying inside the cell; above,
    each subcell's clique arcs (always inside the cell, by nesting) plus
    the level-(ℓ−1) crossing arcs whose head stays inside.
    """
    part = topo.part
    adj = {}
    if level == 1:
        for u in part.members(1, cell):
            lst = [
                (w, f, f.min_travel, f.max_travel, False)
                for w, f, _ in net.forward[u]
                if part.cell(1, w) == cell
            ]
            if lst:
                adj[u] = lst
        return adj
    fine = level - 1
    cells = part.cell_of[level - 1]
    for sub in part.subcells(level)[cell]:
        m = topo.matrix(fine, sub)
        for i, u in enumerate(m.vertices):
            lst = []
            for _, w, ref in m.row(i):
                if ref == SLOT_INF:
                    continue
                if ref == SLOT_UNSET:
                    raise OverlayStateError(
                        f"level {fine} must be customized before level {level}"
                    )
                f = pool[ref]
                lst.append((w, f, f.min_travel, f.max_travel, True))
            for w, arc_id in topo.boundary_arcs[fine - 1][u]:
                if cells[w] == cell:
                    f = net.arcs[arc_id][2]
                    lst.append((w, f, f.min_travel, f.max_travel, False))
            if lst:
                adj[u] = lst
    return adj


# ------------------------------------------------------------ profile search


def profile_search_cell(source: int, adj, cfg: CustomizationConfig, counters=None):
    """Exact travel-time profiles from `source` to everything reachable in
    the restricted search graph `adj` (see cell_adjacency).

    Label-correcting search keyed on each label's minimum travel time,
    ties broken by vertex id.  Relaxation of an arc (u, w) applies, in
    order and each under its own toggle: clique-flag suppression, hopping
    reduction, pre-link bound pruning, the link itself (with or without
    constant fast paths), post-link bound checks (discard dominated
    tentative / replace dominated incumbent outright), the simulated
    merge, and only then a true merge.  Returns the label map; targets
    the caller cares about are looked up in it.
    """
    if counters is None:
        counters = SearchCounters()
    labels = {source: ZERO}
    parent = {source: None}  # unique predecessor vertex, or None if mixed
    flag = {source: False}  # True: label obtained purely via clique arcs
    heap = [(0, source)]
    push = heapq.heappush
    pop = heapq.heappop
    use_flags = cfg.clique_flags
    use_hop = cfg.hopping_reduction
    use_bounds = cfg.bound_pruning
    use_post = cfg.post_link_bounds
    use_sim = cfg.simulated_merge
    fast = cfg.constant_fast_paths
    while heap:
        key, u = pop(heap)
        fu = labels[u]
        if key > fu.min_travel:
            continue  # superseded entry
        counters.scans += 1
        fu_min = fu.min_travel
        u_flagged = use_flags and flag[u]
        u_parent = parent[u] if use_hop else None
        for w, g, gmin, _, is_clq in adj.get(u, ()):
            if is_clq and u_flagged:
                counters.flag_suppressed += 1
                continue
            if w == u_parent:
                counters.hops_skipped += 1
                continue
            old = labels.get(w)
            if old is not None and use_bounds and fu_min + gmin > old.max_travel:
                counters.pruned_before_link += 1
                continue
            h = link(fu, g, fast_paths=fast)
            counters.links += 1
            if old is None:
                labels[w] = h
                parent[w] = u
                flag[w] = is_clq
                push(heap, (h.min_travel, w))
                continue
            new_label = None
            replaced = False
            if use_post:
                if h.min_travel > old.max_travel:
                    counters.discarded_after_link += 1
                    continue
                if h.max_travel < old.min_travel:
                    counters.replaced_after_link += 1
                    new_label = h
                    replaced = True
            if new_label is None and use_sim:
                counters.simulated_merges += 1
                dom = simulated_merge(old, h)
                if dom is Dominance.F:
                    continue
                if dom is Dominance.G:
                    new_label = h
                    replaced = True
                # a crossing falls through to the true merge
            if new_label is None:
                counters.true_merges += 1
                merged, prov = merge(old, h)
                if "g" not in prov:
                    continue  # tentative never improves the incumbent
                new_label = merged
                replaced = "f" not in prov
            labels[w] = new_label
            if replaced:
                parent[w] = u
                flag[w] = is_clq
            else:
                parent[w] = None
                if not is_clq:
                    flag[w] = False
            push(heap, (new_label.min_travel, w))
    return labels


def _source_row(source, view, topo, level, cfg, counters):
    """One clique-matrix row: (slot column, profile or None) per target."""
    labels = profile_search_cell(source, view, cfg, counters)
    m, i = topo.locate(level, source)
    return [(j, labels.get(w)) for j, w, _ in m.row(i)]


# ------------------------------------------------------- parallel scheduling


def merge_worker_outputs(buffers):
    """Merge per-worker (source, row) buffers into ascending source order.

    Each buffer is already ascending (workers claim sources from a shared
    ascending cursor), so this is a k-way merge; sources must be disjoint
    across buffers.
    """
    merged = list(heapq.merge(*buffers, key=lambda item: item[0]))
    for a, b in zip(merged, merged[1:]):
        if a[0] >= b[0]:
            raise OverlayStateError(f"duplicate source {b[0]} in worker outputs")
    return merged


def _run_level(net, topo, pool, level, views, cfg, totals):
    """Profile rows for every level-ℓ boundary vertex, worker-parallel but
    deterministically merged."""
    sources = list(topo.sources(level))
    workers = min(cfg.worker_count, len(sources)) or 1
    part = topo.part
    buffers = [[] for _ in range(workers)]
    local = [SearchCounters() for _ in range(workers)]
    errors = []
    lock = threading.Lock()
    cursor = [0]

    def run(k: int) -> None:
        try:
            while True:
                with lock:
                    i = cursor[0]
                    cursor[0] += 1
                if i >= len(sources):
                    return
                u = sources[i]
                view = views[part.cell(level, u)]
                buffers[k].append((u, _source_row(u, view, topo, level, cfg, local[k])))
        except BaseException as exc:  # surfaced after join
            errors.append(exc)

    if workers == 1:
        run(0)
    else:
        threads = [threading.Thread(target=run, args=(k,)) for k in range(workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    if errors:
        raise errors[0]
    for c in local:
        totals.add(c)
    return merge_worker_outputs(buffers)


# -------------------------------------------------------------- level passes


def approximate_level(topo: OverlayTopology, pool: FunctionPool, level: int, eps) -> None:
    """Replace every nonconstant slot of the level by its minimal
    approximation within the relative band; eps = 0 leaves the pool
    untouched, constants are already minimal."""
    eps = parse_eps(eps)
    if eps == 0:
        return
    for ref in topo.level_refs(level):
        f = pool[ref]
        if not f.is_constant:
            pool.replace(ref, approximate(f, eps))


def customize(net, topo: OverlayTopology, pool: FunctionPool, cfg: CustomizationConfig):
    """Populate the whole overlay bottom-up and return per-level stats.

    Any previous customization is discarded first.  For each level: build
    the restricted search-graph views, run profile searches from every
    boundary vertex (worker-parallel, deterministic merge), write the
    pool in canonical order, then simplify the finished level with its
    error bound.  The canonical pool layout is re-verified at the end.
    """
    levels = topo.level_count
    cfg.validate(levels)
    topo.reset_slots(pool)
    counters = SearchCounters()
    rows = []
    for level in range(1, levels + 1):
        t0 = perf_counter()
        views = [
            cell_adjacency(net, topo, pool, level, c)
            for c in range(topo.part.num_cells(level))
        ]
        for u, row in _run_level(net, topo, pool, level, views, cfg, counters):
            m, i = topo.locate(level, u)
            for j, f in row:
                m.set_slot(i, j, SLOT_INF if f is None else pool.append(f))
        approximate_level(topo, pool, level, cfg.eps_for(level))
        bps, pct, cplx = recount_level(topo, pool, level)
        rows.append(LevelStats(level, bps, pct, cplx, perf_counter() - t0))
    topo.check_pool_layout(pool)
    return CustomizationStats(rows, counters)
