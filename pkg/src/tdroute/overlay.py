"""Metric-independent overlay: per-level, per-cell clique matrices over
boundary vertices, the retained inter-cell boundary arcs, and the
contiguous function pool the clique slots index into.

The topology is fixed once built.  Customization fills the pool and the
slot matrices; queries only read them.  A slot holds a pool index or one
of three negative sentinels: not yet customized, unreachable within the
cell, or the diagonal (a vertex to itself, the zero function).  The pool
keeps each boundary vertex's outgoing shortcuts adjacent, level by level
and source by source in ascending vertex order — `check_pool_layout`
re-verifies that exact layout after every write phase, and the update
path relies on it never changing (functions are replaced in place; slot
reachability is a property of the fixed topology, so no ref ever moves).
"""

from __future__ import annotations

from .plf import TTF, ZERO

__all__ = [
    "SLOT_UNSET",
    "SLOT_INF",
    "SLOT_SELF",
    "OverlayStateError",
    "CliqueMatrix",
    "FunctionPool",
    "OverlayTopology",
    "build_topology",
]

SLOT_UNSET = -1  # customization has not filled the slot yet
SLOT_INF = -2  # target unreachable inside the cell (never changes)
SLOT_SELF = -3  # diagonal: the zero function


class OverlayStateError(RuntimeError):
    """Overlay used in a state it is not in (e.g. slot read before
    customization) or a write broke a structural invariant."""


class CliqueMatrix:
    """Complete directed clique over one cell's ordered boundary vertices.

    `slots` is row-major b×b; entry (i, j) describes the shortcut from
    vertices[i] to vertices[j].
    """

    __slots__ = ("vertices", "index_of", "slots")

    def __init__(self, vertices):
        self.vertices = list(vertices)
        self.index_of = {v: i for i, v in enumerate(self.vertices)}
        b = len(self.vertices)
        self.slots = [SLOT_UNSET] * (b * b)
        for i in range(b):
            self.slots[i * b + i] = SLOT_SELF

    @property
    def size(self) -> int:
        return len(self.vertices)

    def slot(self, i: int, j: int) -> int:
        return self.slots[i * len(self.vertices) + j]

    def set_slot(self, i: int, j: int, ref: int) -> None:
        if i == j:
            raise OverlayStateError("diagonal slots are fixed to the zero function")
        self.slots[i * len(self.vertices) + j] = ref

    def row(self, i: int):
        """(j, target vertex, ref) for every off-diagonal slot of row i."""
        b = len(self.vertices)
        base = i * b
        for j in range(b):
            if j != i:
                yield j, self.vertices[j], self.slots[base + j]

    def reset(self) -> None:
        b = len(self.vertices)
        for i in range(b):
            for j in range(b):
                if i != j:
                    self.slots[i * b + j] = SLOT_UNSET


class FunctionPool:
    """Append-only store of shortcut travel-time functions.

    Append order is the canonical layout (level, then source vertex, then
    slot); recustomization and live updates replace functions at their
    existing indices, so references stay valid for the lifetime of the
    customized state.
    """

    __slots__ = ("funcs",)

    def __init__(self):
        self.funcs: list[TTF] = []

    def __len__(self) -> int:
        return len(self.funcs)

    def __getitem__(self, ref: int) -> TTF:
        if ref < 0:
            raise OverlayStateError(f"sentinel {ref} is not a pool reference")
        return self.funcs[ref]

    def append(self, f: TTF) -> int:
        self.funcs.append(f)
        return len(self.funcs) - 1

    def replace(self, ref: int, f: TTF) -> None:
        if ref < 0:
            raise OverlayStateError(f"sentinel {ref} is not a pool reference")
        self.funcs[ref] = f

    def clear(self) -> None:
        self.funcs.clear()

    def total_breakpoints(self, refs=None) -> int:
        if refs is None:
            return sum(len(f.deps) for f in self.funcs)
        return sum(len(self.funcs[r].deps) for r in refs)


class OverlayTopology:
    """All clique matrices plus the retained boundary arcs, per level.

    Requires the boundary-first vertex numbering: level-ℓ boundary
    vertices are exactly the ids [0, boundary_count[ℓ]).
    """

    __slots__ = ("part", "matrices", "boundary_arcs", "boundary_count")

    def __init__(self, part, matrices, boundary_arcs, boundary_count):
        self.part = part
        self.matrices = matrices  # [level-1][cell] -> CliqueMatrix
        self.boundary_arcs = boundary_arcs  # [level-1][vertex] -> [(head, arc_id)]
        self.boundary_count = boundary_count  # level -> int

    @property
    def level_count(self) -> int:
        return len(self.matrices)

    def matrix(self, level: int, cell: int) -> CliqueMatrix:
        return self.matrices[level - 1][cell]

    def locate(self, level: int, v: int):
        """(matrix, row index) of boundary vertex v at `level`."""
        m = self.matrices[level - 1][self.part.cell(level, v)]
        i = m.index_of.get(v)
        if i is None:
            raise OverlayStateError(f"vertex {v} is not a level-{level} boundary vertex")
        return m, i

    def shortcut(self, pool: FunctionPool, level: int, u: int, v: int):
        """The stored shortcut u→v of the level's cell: (function, min, max).

        The diagonal is the zero function; an unreachable pair returns
        (None, None, None); an uncustomized slot is an error.
        """
        m, i = self.locate(level, u)
        j = m.index_of.get(v)
        if j is None:
            raise OverlayStateError(
                f"vertices {u} and {v} are not boundary vertices of the same "
                f"level-{level} cell"
            )
        ref = m.slot(i, j)
        if ref == SLOT_SELF:
            return ZERO, 0, 0
        if ref == SLOT_INF:
            return None, None, None
        if ref == SLOT_UNSET:
            raise OverlayStateError(
                f"level-{level} shortcut {u}->{v} read before customization"
            )
        f = pool[ref]
        return f, f.min_travel, f.max_travel

    def slot_count(self) -> int:
        return sum(m.size * (m.size - 1) for per in self.matrices for m in per)

    def sources(self, level: int):
        """Level-ℓ boundary vertices in canonical (ascending id) order."""
        return range(self.boundary_count[level])

    def row_refs(self, level: int, v: int):
        """Pool refs of v's outgoing level-ℓ slots, in slot order
        (sentinels excluded)."""
        m, i = self.locate(level, v)
        return [ref for _, _, ref in m.row(i) if ref >= 0]

    def level_refs(self, level: int) -> list:
        """All pool refs of one level in canonical order."""
        out = []
        for v in self.sources(level):
            out.extend(self.row_refs(level, v))
        return out

    def check_pool_layout(self, pool: FunctionPool) -> None:
        """Assert the canonical pool layout: levels in order, sources in
        ascending id order, each source's refs contiguous and in slot
        order, nothing else in the pool."""
        cursor = 0
        for level in range(1, self.level_count + 1):
            for v in self.sources(level):
                for ref in self.row_refs(level, v):
                    if ref != cursor:
                        raise OverlayStateError(
                            f"pool layout broken at level {level} source {v}: "
                            f"expected ref {cursor}, found {ref}"
                        )
                    cursor += 1
        if cursor != len(pool):
            raise OverlayStateError(
                f"pool holds {len(pool)} functions, slots reference {cursor}"
            )

    def reset_slots(self, pool: FunctionPool) -> None:
        """Forget all customized functions (before a full recustomization)."""
        for per in self.matrices:
            for m in per:
                m.reset()
        pool.clear()


def build_topology(net, part, bs) -> OverlayTopology:
    """Clique matrices over each cell's boundary vertices plus, per level,
    the original arcs that cross cells of that level.  Requires the
    boundary-first numbering (see partition.reorder_and_index); purely
    structural, so the result is independent of the metric."""
    levels = part.level_count
    boundary_count = {}
    for level in range(1, levels + 1):
        cnt = len(bs.per_level[level])
        if bs.per_level[level] != list(range(cnt)):
            raise OverlayStateError(
                f"level-{level} boundary vertices are not the id prefix; "
                "build the topology on the reordered network"
            )
        boundary_count[level] = cnt
    matrices = []
    boundary_arcs = []
    for level in range(1, levels + 1):
        per_cell = [
            CliqueMatrix(bs.per_cell[(level, c)]) for c in range(part.num_cells(level))
        ]
        matrices.append(per_cell)
        cells = part.cell_of[level - 1]
        arcs = [
            [(h, arc_id) for h, _, arc_id in net.forward[v] if cells[h] != cells[v]]
            for v in range(boundary_count[level])
        ]
        boundary_arcs.append(arcs)
    return OverlayTopology(part, matrices, boundary_arcs, boundary_count)
