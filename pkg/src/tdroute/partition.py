"""Nested multi-level partitions, boundary detection, and the
boundary-first vertex reordering.

Level 1 is the finest partition, level L the coarsest; nesting means every
level-ℓ cell lies inside exactly one level-(ℓ+1) cell.  A vertex is a
boundary vertex of level ℓ when one of its arcs crosses level-ℓ cells; by
nesting, boundary at ℓ implies boundary at every finer level.  The
reordering sorts vertices by descending boundary rank, then by cell ids
coarse-to-fine, so that per level the boundary vertices occupy the id
prefix [0, count) and the interior vertices of every bottom-level cell form
one contiguous id range — the two facts queries rely on for compact label
storage and range-based resets.
"""

from __future__ import annotations

from dataclasses import dataclass

from .network import NetworkFormatError, RoadNetwork

__all__ = [
    "MultiLevelPartition",
    "BoundarySet",
    "VertexOrdering",
    "PartitionError",
    "build_partition",
    "load_partition",
    "save_partition",
    "compute_boundaries",
    "reorder_and_index",
    "derive_ordering",
]


class PartitionError(ValueError):
    """Nesting/coverage violation in a multi-level partition."""


class MultiLevelPartition:
    """Cell assignment per vertex for levels 1..L (finest..coarsest)."""

    __slots__ = ("cell_of", "max_cell_size", "_members", "_subcells")

    def __init__(self, cell_of, max_cell_size=None):
        self.cell_of = [list(level) for level in cell_of]
        if max_cell_size is None:
            max_cell_size = []
            for level in self.cell_of:
                sizes: dict = {}
                for c in level:
                    sizes[c] = sizes.get(c, 0) + 1
                max_cell_size.append(max(sizes.values()) if sizes else 0)
        self.max_cell_size = list(max_cell_size)
        self._members = None
        self._subcells = None

    @property
    def level_count(self) -> int:
        return len(self.cell_of)

    @property
    def vertex_count(self) -> int:
        return len(self.cell_of[0]) if self.cell_of else 0

    def cell(self, level: int, v: int) -> int:
        return self.cell_of[level - 1][v]

    def num_cells(self, level: int) -> int:
        arr = self.cell_of[level - 1]
        return max(arr) + 1 if arr else 0

    def members(self, level: int, cell: int) -> list:
        """Vertices of one cell (cached per level)."""
        if self._members is None:
            self._members = [None] * self.level_count
        idx = level - 1
        if self._members[idx] is None:
            groups = [[] for _ in range(self.num_cells(level))]
            for v, c in enumerate(self.cell_of[idx]):
                groups[c].append(v)
            self._members[idx] = groups
        return self._members[idx][cell]

    def subcells(self, level: int) -> list:
        """For level >= 2: per level-ℓ cell, the sorted ids of the
        level-(ℓ−1) cells nested inside it."""
        if self._subcells is None:
            self._subcells = [None] * (self.level_count + 1)
        if self._subcells[level] is None:
            seen = [set() for _ in range(self.num_cells(level))]
            fine = self.cell_of[level - 2]
            coarse = self.cell_of[level - 1]
            for v in range(self.vertex_count):
                seen[coarse[v]].add(fine[v])
            self._subcells[level] = [sorted(s) for s in seen]
        return self._subcells[level]

    def validate(self, vertex_count: int) -> None:
        if any(len(level) != vertex_count for level in self.cell_of):
            raise PartitionError("partition does not cover every vertex")
        for idx, level in enumerate(self.cell_of):
            if level and sorted(set(level)) != list(range(max(level) + 1)):
                raise PartitionError(f"level {idx + 1} cell ids are not dense")
        for idx in range(self.level_count - 1):
            parent_of: dict = {}
            for v in range(vertex_count):
                fine, coarse = self.cell_of[idx][v], self.cell_of[idx + 1][v]
                prev = parent_of.setdefault(fine, coarse)
                if prev != coarse:
                    raise PartitionError(
                        f"vertex {v}: level-{idx + 1} cell {fine} spans "
                        f"level-{idx + 2} cells {prev} and {coarse}"
                    )

    def permuted(self, perm) -> "MultiLevelPartition":
        """Same partition on renamed vertices (perm maps old id -> new id)."""
        out = []
        for level in self.cell_of:
            arr = [0] * len(level)
            for old, c in enumerate(level):
                arr[perm[old]] = c
            out.append(arr)
        return MultiLevelPartition(out, self.max_cell_size)

    def __eq__(self, other):
        if not isinstance(other, MultiLevelPartition):
            return NotImplemented
        return self.cell_of == other.cell_of


# -------------------------------------------------------------- construction


def _bfs_order(group, net) -> list:
    """Deterministic BFS order over `group` (restarting at the smallest
    unvisited id, neighbors in adjacency order, which is sorted by head)."""
    member = set(group)
    seen = set()
    order = []
    for start in sorted(group):
        if start in seen:
            continue
        seen.add(start)
        queue = [start]
        qi = 0
        while qi < len(queue):
            u = queue[qi]
            qi += 1
            order.append(u)
            for v, _, _ in net.forward[u]:
                if v in member and v not in seen:
                    seen.add(v)
                    queue.append(v)
            for v, _, _ in net.reverse[u]:
                if v in member and v not in seen:
                    seen.add(v)
                    queue.append(v)
    return order


def _split_group(group, target, net, geometric, depth=0):
    """Recursive bisection until pieces fit `target`; median split on
    alternating coordinate axes when coordinates exist, else halves of a
    BFS order.  Median ties go to the first half by vertex id."""
    if len(group) <= target:
        return [group]
    if geometric:
        axis = depth % 2
        ordered = sorted(group, key=lambda v: (net.coords[v][axis], v))
    else:
        ordered = _bfs_order(group, net)
    mid = (len(ordered) + 1) // 2
    left = _split_group(ordered[:mid], target, net, geometric, depth + 1)
    right = _split_group(ordered[mid:], target, net, geometric, depth + 1)
    return left + right


def build_partition(net: RoadNetwork, level_sizes) -> MultiLevelPartition:
    """Top-down nested partition: split the whole graph into cells of at
    most level_sizes[-1] vertices, then each cell again for the next level
    down, so nesting holds by construction."""
    sizes = list(level_sizes)
    if any(s < 1 for s in sizes):
        raise PartitionError(f"infeasible level sizes {sizes}")
    if sizes != sorted(sizes) or len(set(sizes)) != len(sizes):
        raise PartitionError("level sizes must be strictly increasing")
    n = net.vertex_count
    levels = len(sizes)
    geometric = net.coords is not None
    cells = _split_group(list(range(n)), sizes[-1], net, geometric)
    cell_of = []
    level_cells = cells
    for idx in range(levels - 1, -1, -1):
        if idx < levels - 1:
            level_cells = [
                piece
                for cell in level_cells
                for piece in _split_group(cell, sizes[idx], net, geometric)
            ]
        arr = [0] * n
        for cid, group in enumerate(level_cells):
            for v in group:
                arr[v] = cid
        cell_of.append(arr)
    cell_of.reverse()  # built coarse-to-fine; store fine-to-coarse
    part = MultiLevelPartition(cell_of, sizes)
    part.validate(n)
    return part


# ------------------------------------------------------------------- mlp I/O


def save_partition(part: MultiLevelPartition, path) -> None:
    n = part.vertex_count
    lines = [f"mlp 1 {n} {part.level_count}"]
    for v in range(n):
        lines.append(" ".join(str(part.cell_of[idx][v]) for idx in range(part.level_count)))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_partition(path, net: RoadNetwork) -> MultiLevelPartition:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.split() and ln.split()[0] != "c"]
    if not lines:
        raise NetworkFormatError("empty partition file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "mlp" or head[1] != "1":
        raise NetworkFormatError(f"line 1: bad header {lines[0]!r}")
    try:
        n, levels = int(head[2]), int(head[3])
    except ValueError:
        raise NetworkFormatError(f"line 1: bad header {lines[0]!r}") from None
    if n != net.vertex_count:
        raise NetworkFormatError(
            f"partition is for {n} vertices, network has {net.vertex_count}"
        )
    if len(lines) - 1 != n:
        raise NetworkFormatError(f"expected {n} assignment lines, got {len(lines) - 1}")
    raw = []
    for lno, line in enumerate(lines[1:], start=2):
        fields = line.split()
        if len(fields) != levels:
            raise NetworkFormatError(
                f"line {lno}: expected {levels} cell ids, got {len(fields)}"
            )
        try:
            raw.append([int(f) for f in fields])
        except ValueError:
            raise NetworkFormatError(f"line {lno}: non-integer cell id") from None
    # densify ids per level in first-seen order so equality is canonical
    cell_of = []
    for idx in range(levels):
        remap: dict = {}
        arr = []
        for v in range(n):
            c = raw[v][idx]
            if c not in remap:
                remap[c] = len(remap)
            arr.append(remap[c])
        cell_of.append(arr)
    part = MultiLevelPartition(cell_of)
    part.validate(n)
    return part


# ------------------------------------------------- boundaries and reordering


class BoundarySet:
    """Boundary vertices per level and per (level, cell)."""

    __slots__ = ("per_level", "per_cell", "_sets")

    def __init__(self, per_level, per_cell):
        self.per_level = per_level  # level -> sorted vertex list (1-based key)
        self.per_cell = per_cell  # (level, cell) -> sorted vertex list
        self._sets = {lvl: set(vs) for lvl, vs in per_level.items()}

    def is_boundary(self, level: int, v: int) -> bool:
        return v in self._sets[level]

    def count(self, level: int) -> int:
        return len(self.per_level[level])


def compute_boundaries(net: RoadNetwork, part: MultiLevelPartition) -> BoundarySet:
    levels = part.level_count
    per_level = {}
    per_cell = {}
    for level in range(1, levels + 1):
        cells = part.cell_of[level - 1]
        marked = set()
        for tail, head, _ in net.arcs:
            if cells[tail] != cells[head]:
                marked.add(tail)
                marked.add(head)
        per_level[level] = sorted(marked)
        groups: dict = {}
        for v in per_level[level]:
            groups.setdefault(cells[v], []).append(v)
        for c in range(part.num_cells(level)):
            per_cell[(level, c)] = groups.get(c, [])
    return BoundarySet(per_level, per_cell)


@dataclass
class VertexOrdering:
    """Result of the boundary-first renumbering.

    boundary_count[ℓ] (1-based dict) — vertices [0, count) are exactly the
    level-ℓ boundary vertices.  level1_interior[c] — contiguous id range
    (start, end) of the non-boundary vertices of bottom-level cell c, which
    is how queries map an interior vertex to its cell and size their
    scratch label blocks.
    """

    perm: list
    inv: list
    boundary_count: dict
    level1_interior: list
    max_level1_cell: int


def reorder_and_index(net: RoadNetwork, part: MultiLevelPartition):
    """Renumber vertices boundary-first and return the permuted network,
    the permuted partition, the ordering metadata, and the boundary sets
    (in new ids)."""
    n = net.vertex_count
    levels = part.level_count
    bs = compute_boundaries(net, part)
    rank = [0] * n
    for level in range(1, levels + 1):
        for v in bs.per_level[level]:
            if level > rank[v]:
                rank[v] = level

    def key(v):
        return (
            -rank[v],
            *(part.cell_of[idx][v] for idx in range(levels - 1, -1, -1)),
            v,
        )

    order = sorted(range(n), key=key)
    perm = [0] * n
    for new, old in enumerate(order):
        perm[old] = new
    arcs = [(perm[t], perm[h], f) for t, h, f in net.arcs]
    coords = None
    if net.coords is not None:
        coords = [None] * n
        for old, c in enumerate(net.coords):
            coords[perm[old]] = c
    net2 = RoadNetwork(n, arcs, coords)
    part2 = part.permuted(perm)
    bs2 = compute_boundaries(net2, part2)
    ordering = derive_ordering(part2, bs2, perm, order)
    return net2, part2, ordering, bs2


def derive_ordering(part, bs, perm, inv) -> VertexOrdering:
    """Ordering metadata for a partition already in boundary-first layout:
    per-level boundary counts (asserting the id-prefix property), the
    contiguous interior range of every bottom-level cell, and the largest
    bottom-level cell size.  `perm`/`inv` are carried through so callers
    restoring persisted state keep the original-id mapping."""
    n = part.vertex_count
    boundary_count = {}
    for level in range(1, part.level_count + 1):
        cnt = len(bs.per_level[level])
        if bs.per_level[level] != list(range(cnt)):
            raise PartitionError(
                f"level-{level} boundary vertices do not form the id prefix"
            )
        boundary_count[level] = cnt
    num_bottom = part.num_cells(1)
    level1_interior = [(0, 0)] * num_bottom
    bottom = part.cell_of[0]
    v = boundary_count[1]
    while v < n:
        c = bottom[v]
        start = v
        while v < n and bottom[v] == c:
            v += 1
        level1_interior[c] = (start, v)
    max_cell = max((len(part.members(1, c)) for c in range(num_bottom)), default=0)
    return VertexOrdering(perm, inv, boundary_count, level1_interior, max_cell)
