"""Point-to-point earliest-arrival queries over a customized overlay.

The search is a unidirectional time-dependent Dijkstra on an implicit
graph: at each scanned vertex v the relaxed arc set is chosen by v's
search level — the smaller of the highest levels at which v shares no
cell with the source and with the target.  Level 0 relaxes the original
arcs; level ℓ ≥ 1 relaxes v's level-ℓ clique shortcuts plus the original
arcs that cross level-ℓ cells.  Every vertex reachable in this graph at
level ℓ ≥ 1 is a level-ℓ boundary vertex (crossing arcs only ever lead
to boundary vertices, and clique arcs preserve the level), which is what
lets labels live in a compact remapped store: one slot per boundary
vertex, plus a fixed block for the interior vertices of the (at most
two) bottom-level cells the search can enter — the source's and the
target's.  Resets clear exactly what a query touched.

Two query-time accelerations, both result-preserving in exact mode: a
minimum-travel bound check before any function evaluation, and clique
flags on the top-k levels that skip outgoing clique arcs of vertices
whose label already arrived through the same clique.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from .customization import cell_adjacency
from .overlay import SLOT_UNSET, OverlayStateError
from .plf import round_half_up

__all__ = [
    "QueryConfig",
    "QueryResult",
    "QueryEngine",
    "PathInconsistencyError",
    "search_level",
    "unpack_path",
]


class PathInconsistencyError(RuntimeError):
    """Expanded path cost disagrees with the query beyond the tolerance."""


@dataclass(frozen=True)
class QueryConfig:
    """clique_flag_top_k: the k coarsest levels consult clique flags
    (0 disables them); bound_pruning: skip evaluating an arc whose
    minimum cannot improve the head's label."""

    clique_flag_top_k: int = 2
    bound_pruning: bool = True

    def validate(self, levels: int) -> None:
        if not 0 <= self.clique_flag_top_k <= levels:
            raise ValueError(
                f"clique_flag_top_k must be in [0, {levels}], "
                f"got {self.clique_flag_top_k}"
            )


@dataclass
class QueryResult:
    """One earliest-arrival answer with its search-effort counters.

    arrival/travel are exact (integer or rational) milliseconds, None when
    the target is unreachable; travel = arrival − departure.  Counters:
    scanned_vertices = queue extractions settled, relaxed_arcs = arc
    relaxations attempted (bound-pruned ones included), and
    evaluated_breakpoints = the breakpoint count of every function
    actually evaluated, summed.  path holds (vertex, arc level, via
    clique) per hop — level and flag describe the arc that reached the
    vertex — and is None when unreachable.
    """

    source: int
    target: int
    departure: int
    arrival: object
    travel: object
    scanned_vertices: int
    relaxed_arcs: int
    evaluated_breakpoints: int
    path: object = None

    @property
    def arrival_ms(self):
        return None if self.arrival is None else round_half_up(self.arrival)

    @property
    def travel_ms(self):
        return None if self.travel is None else round_half_up(self.travel)


def search_level(s: int, t: int, v: int, part) -> int:
    """The level whose arcs the query relaxes at v: min over the highest
    level where v and s share no cell and the same for t; 0 when v shares
    a bottom-level cell with either endpoint."""

    def uncommon(a, b):
        for idx in range(part.level_count - 1, -1, -1):
            if part.cell_of[idx][a] != part.cell_of[idx][b]:
                return idx + 1
        return 0

    return min(uncommon(s, v), uncommon(v, t))


class _QueryLabels:
    """Remapped label store: boundary vertices map to their own ids (the
    numbering puts them in the prefix), interior vertices of the two
    active bottom cells map into a fixed-size block via the cell's
    contiguous id range.  begin() clears what the previous query touched:
    the boundary slots it wrote and the full ranges of its active cells.
    """

    __slots__ = (
        "b1",
        "block",
        "cells1",
        "ranges",
        "dist",
        "parent",
        "meta",
        "flag",
        "touched",
        "active",
    )

    def __init__(self, ordering, part):
        self.b1 = ordering.boundary_count[1]
        self.block = ordering.max_level1_cell
        self.cells1 = part.cell_of[0]
        self.ranges = ordering.level1_interior
        size = self.b1 + 2 * self.block
        self.dist = [None] * size
        self.parent = [-1] * size
        self.meta = [None] * size
        self.flag = bytearray(size)
        self.touched = []
        self.active = ()

    def begin(self, s: int, t: int) -> None:
        for i in self.touched:
            self.dist[i] = None
            self.parent[i] = -1
            self.meta[i] = None
            self.flag[i] = 0
        self.touched.clear()
        for base, cell in self.active:
            start, end = self.ranges[cell]
            for i in range(base, base + (end - start)):
                self.dist[i] = None
                self.parent[i] = -1
                self.meta[i] = None
                self.flag[i] = 0
        cs, ct = self.cells1[s], self.cells1[t]
        self.active = ((self.b1, cs),) if cs == ct else (
            (self.b1, cs),
            (self.b1 + self.block, ct),
        )

    def slot(self, v: int) -> int:
        if v < self.b1:
            return v
        c = self.cells1[v]
        for base, cell in self.active:
            if c == cell:
                return base + (v - self.ranges[cell][0])
        raise OverlayStateError(
            f"query reached interior vertex {v} outside the active cells"
        )


class QueryEngine:
    """Earliest-arrival queries over one customized state.  An engine owns
    its label store, so use one engine per thread; queries must not
    overlap customization or update write phases."""

    def __init__(self, state, cfg: QueryConfig | None = None):
        self.state = state
        self.cfg = cfg or QueryConfig()
        self.cfg.validate(state.part.level_count)
        self.labels = _QueryLabels(state.ordering, state.part)

    def ea_query(self, s: int, t: int, tau: int) -> QueryResult:
        state = self.state
        net, part, topo, pool = state.net, state.part, state.topo, state.pool
        n = net.vertex_count
        if not (0 <= s < n and 0 <= t < n):
            raise ValueError(f"vertex ids must be in [0, {n})")
        if s == t:
            return QueryResult(s, t, tau, tau, 0, 0, 0, 0, ((s, 0, False),))
        levels = part.level_count
        flag_floor = levels - self.cfg.clique_flag_top_k + 1
        prune = self.cfg.bound_pruning
        cell_of = part.cell_of
        s_cells = [cell_of[i][s] for i in range(levels)]
        t_cells = [cell_of[i][t] for i in range(levels)]

        lb = self.labels
        lb.begin(s, t)
        dist, parent, meta, flag = lb.dist, lb.parent, lb.meta, lb.flag
        touched = lb.touched
        slot_of = lb.slot

        scanned = relaxed = bps = 0
        ss = slot_of(s)
        dist[ss] = tau
        if s < lb.b1:
            touched.append(ss)
        heap = [(tau, s)]
        pop, push = heapq.heappop, heapq.heappush
        target_slot = slot_of(t)

        while heap:
            d, v = pop(heap)
            sv = slot_of(v)
            if d != dist[sv]:
                continue
            scanned += 1
            if v == t:
                break
            # v's search level: min of the uncommon levels toward s and t
            hi = 0
            for idx in range(levels - 1, -1, -1):
                if cell_of[idx][v] != s_cells[idx]:
                    hi = idx + 1
                    break
            lo = 0
            if hi:
                for idx in range(levels - 1, -1, -1):
                    if cell_of[idx][v] != t_cells[idx]:
                        lo = idx + 1
                        break
            lv = min(hi, lo)
            if lv == 0:
                arcs = net.forward[v]
                for w, f, _ in arcs:
                    relaxed += 1
                    sw = slot_of(w)
                    dw = dist[sw]
                    if prune and dw is not None and d + f.min_travel >= dw:
                        continue
                    bps += len(f.deps)
                    a = d + f.value_at(d)
                    if dw is None or a < dw:
                        if dw is None and sw < lb.b1:
                            touched.append(sw)
                        dist[sw] = a
                        parent[sw] = v
                        meta[sw] = (0, False)
                        flag[sw] = 0
                        push(heap, (a, w))
            else:
                if not (flag[sv] and lv >= flag_floor):
                    m, i = topo.locate(lv, v)
                    row = m.slots
                    b = m.size
                    base = i * b
                    verts = m.vertices
                    for j in range(b):
                        ref = row[base + j]
                        if ref < 0:  # self or unreachable
                            if ref == SLOT_UNSET:
                                raise OverlayStateError(
                                    f"level-{lv} slot of vertex {v} read "
                                    "before customization"
                                )
                            continue
                        relaxed += 1
                        w = verts[j]
                        sw = w  # boundary vertices are their own slots
                        dw = dist[sw]
                        f = pool.funcs[ref]
                        if prune and dw is not None and d + f.min_travel >= dw:
                            continue
                        bps += len(f.deps)
                        a = d + f.value_at(d)
                        if dw is None or a < dw:
                            if dw is None:
                                touched.append(sw)
                            dist[sw] = a
                            parent[sw] = v
                            meta[sw] = (lv, True)
                            flag[sw] = 1
                            push(heap, (a, w))
                for w, arc_id in topo.boundary_arcs[lv - 1][v]:
                    relaxed += 1
                    f = net.arcs[arc_id][2]
                    sw = w
                    dw = dist[sw]
                    if prune and dw is not None and d + f.min_travel >= dw:
                        continue
                    bps += len(f.deps)
                    a = d + f.value_at(d)
                    if dw is None or a < dw:
                        if dw is None:
                            touched.append(sw)
                        dist[sw] = a
                        parent[sw] = v
                        meta[sw] = (lv, False)
                        flag[sw] = 0
                        push(heap, (a, w))

        arrival = dist[target_slot]
        if arrival is None:
            return QueryResult(s, t, tau, None, None, scanned, relaxed, bps, None)
        hops = []
        v = t
        while v != s:
            sv = slot_of(v)
            hops.append((v, meta[sv][0], meta[sv][1]))
            v = parent[sv]
        hops.append((s, 0, False))
        hops.reverse()
        return QueryResult(
            s, t, tau, arrival, arrival - tau, scanned, relaxed, bps, tuple(hops)
        )


# ------------------------------------------------------------ path expansion


def _expand_shortcut(state, level: int, u: int, v: int, depart):
    """The concrete hop sequence behind one level-ℓ clique shortcut: an
    earliest-arrival search at the arrival time, over the finer search
    graph restricted to the enclosing cell, expanded recursively."""
    cell = state.part.cell(level, u)
    adj = cell_adjacency(state.net, state.topo, state.pool, level, cell)
    dist = {u: depart}
    parent = {}
    heap = [(depart, u)]
    while heap:
        d, x = heapq.heappop(heap)
        if d != dist[x]:
            continue
        if x == v:
            break
        for w, f, _, _, is_clq in adj.get(x, ()):
            a = d + f.value_at(d)
            if w not in dist or a < dist[w]:
                dist[w] = a
                parent[w] = (x, is_clq)
                heapq.heappush(heap, (a, w))
    if v not in parent and v != u:
        raise PathInconsistencyError(
            f"level-{level} shortcut {u}->{v} has no path inside its cell"
        )
    hops = []
    x = v
    while x != u:
        px, is_clq = parent[x]
        hops.append((px, x, is_clq))
        x = px
    hops.reverse()
    out = []
    for a, b_, is_clq in hops:
        if is_clq:
            out.extend(_expand_shortcut(state, level - 1, a, b_, dist[a]))
        else:
            out.append(b_)
    return out


def unpack_path(result: QueryResult, state, tolerance=0):
    """Original-graph vertex sequence behind a query result.

    Clique hops are expanded by recursive cell-local earliest-arrival
    searches at the times the path reaches them; original-arc hops are
    kept as-is.  The expanded path is then re-evaluated on the original
    arcs; a relative disagreement with result.travel beyond `tolerance`
    (0 in exact mode) raises PathInconsistencyError.
    """
    if result.path is None:
        raise ValueError("cannot unpack an unreachable result")
    net = state.net
    verts = [result.source]
    now = result.departure
    for v, level, via_clique in result.path[1:]:
        tail = len(verts) - 1
        if via_clique:
            verts.extend(_expand_shortcut(state, level, verts[-1], v, now))
        else:
            verts.append(v)
        # drive the newly appended hops; parallel arcs take whichever is
        # fastest at the moment
        for a, b in zip(verts[tail:], verts[tail + 1 :]):
            ids = net.arc_ids(a, b)
            if not ids:
                raise PathInconsistencyError(f"no arc {a}->{b} in the network")
            now = min(now + net.arcs[i][2].value_at(now) for i in ids)
    total = now - result.departure
    claimed = result.travel
    drift = total - claimed if total >= claimed else claimed - total
    if drift > tolerance * claimed:
        raise PathInconsistencyError(
            f"expanded path travel {total} vs query travel {claimed} "
            f"exceeds tolerance {tolerance}"
        )
    return verts
