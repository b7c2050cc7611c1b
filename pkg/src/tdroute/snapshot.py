"""Persist and restore a customized engine state as one self-contained
binary file.

The snapshot holds everything a later process needs to answer queries or
apply live updates without redoing any preprocessing: the reordered
network (whose travel-time coordinates may be exact rationals after
updates), the partition, the original-to-internal vertex permutation, the
customization config (updates re-approximate with the same per-level
bounds), every clique matrix's slot array, and the function pool.  Wall
times and other measurements are deliberately not stored: the file's
bytes depend only on the computed state, so equal states produce
bit-identical snapshots (which the determinism checks compare directly).
Derived structures — boundary sets, topology layout, ordering metadata,
cached function bounds — are recomputed on load from the same
deterministic constructions used when building fresh.

Layout: magic + version, then length-prefixed big-endian integers
throughout (rationals as numerator/denominator pairs), grouped into
config, network, partition, permutation, slot, and pool sections, with a
trailing end marker.  Everything is written through one cursor, so the
format needs no offset table.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

from .customization import CustomizationConfig, customize, parse_eps
from .network import RoadNetwork
from .overlay import SLOT_SELF, FunctionPool, OverlayTopology, build_topology
from .partition import (
    BoundarySet,
    MultiLevelPartition,
    VertexOrdering,
    build_partition,
    compute_boundaries,
    derive_ordering,
    reorder_and_index,
)
from .plf import TTF

__all__ = [
    "EngineState",
    "SnapshotError",
    "build_state",
    "save_snapshot",
    "load_snapshot",
]

_MAGIC = b"tdrsnap\x00"
_VERSION = 1
_END = b"\xf0\x0f"


class SnapshotError(ValueError):
    """Snapshot file malformed, truncated, or from an unknown version."""


@dataclass
class EngineState:
    """A complete, query-ready engine: reordered network and partition,
    ordering metadata, boundary sets, overlay topology, function pool,
    and the customization config in force."""

    net: RoadNetwork
    part: MultiLevelPartition
    ordering: VertexOrdering
    boundary: BoundarySet
    topo: OverlayTopology
    pool: FunctionPool
    config: CustomizationConfig


def build_state(net: RoadNetwork, level_sizes, config: CustomizationConfig):
    """Run the whole pipeline on an as-loaded network: partition, reorder
    into the boundary-first numbering, build the overlay topology, and
    customize.  Returns (state, customization stats); state.net uses the
    internal numbering, and state.ordering maps it back."""
    part = build_partition(net, level_sizes)
    net2, part2, ordering, bs = reorder_and_index(net, part)
    topo = build_topology(net2, part2, bs)
    pool = FunctionPool()
    stats = customize(net2, topo, pool, config)
    return EngineState(net2, part2, ordering, bs, topo, pool, config), stats


# ------------------------------------------------------------- primitive I/O


def _w_int(buf, x: int) -> None:
    n = max(1, (x.bit_length() + 8) // 8)  # one spare bit for the sign
    raw = x.to_bytes(n, "big", signed=True)
    if len(raw) > 0xFFFF:
        raise SnapshotError("integer too large to encode")
    buf.write(len(raw).to_bytes(2, "big"))
    buf.write(raw)


def _r_int(buf) -> int:
    head = buf.read(2)
    if len(head) != 2:
        raise SnapshotError("truncated snapshot (integer header)")
    n = int.from_bytes(head, "big")
    raw = buf.read(n)
    if len(raw) != n:
        raise SnapshotError("truncated snapshot (integer body)")
    return int.from_bytes(raw, "big", signed=True)


def _w_rat(buf, x) -> None:
    if isinstance(x, int):
        _w_int(buf, x)
        _w_int(buf, 1)
    else:
        _w_int(buf, int(x.numerator))
        _w_int(buf, int(x.denominator))


def _r_rat(buf):
    num = _r_int(buf)
    den = _r_int(buf)
    if den <= 0:
        raise SnapshotError("nonpositive denominator in snapshot")
    if den == 1:
        return num
    from .plf import _RAT  # same exact-arithmetic backend as the algebra

    return _RAT(num, den)


def _w_str(buf, s: str) -> None:
    raw = s.encode("ascii")
    _w_int(buf, len(raw))
    buf.write(raw)


def _r_str(buf) -> str:
    n = _r_int(buf)
    raw = buf.read(n)
    if len(raw) != n:
        raise SnapshotError("truncated snapshot (string)")
    return raw.decode("ascii")


def _w_ttf(buf, f: TTF) -> None:
    _w_int(buf, len(f.deps))
    for d, t in zip(f.deps, f.tts):
        _w_rat(buf, d)
        _w_rat(buf, t)


def _r_ttf(buf) -> TTF:
    k = _r_int(buf)
    if k < 1:
        raise SnapshotError("empty travel-time function in snapshot")
    return TTF([(_r_rat(buf), _r_rat(buf)) for _ in range(k)])


# ------------------------------------------------------------- save and load

_FLAGS = (
    "bound_pruning",
    "constant_fast_paths",
    "post_link_bounds",
    "simulated_merge",
    "hopping_reduction",
    "clique_flags",
)


def save_snapshot(state: EngineState, path) -> None:
    buf = io.BytesIO()
    buf.write(_MAGIC)
    _w_int(buf, _VERSION)

    cfg = state.config
    _w_int(buf, len(cfg.eps_per_level))
    for e in cfg.eps_per_level:
        _w_str(buf, str(parse_eps(e)))  # canonical exact form, e.g. "1/100"
    mask = 0
    for bit, name in enumerate(_FLAGS):
        if getattr(cfg, name):
            mask |= 1 << bit
    _w_int(buf, mask)
    _w_int(buf, cfg.worker_count)

    net = state.net
    _w_int(buf, net.vertex_count)
    _w_int(buf, 1 if net.coords is not None else 0)
    if net.coords is not None:
        for x, y in net.coords:
            _w_int(buf, x)
            _w_int(buf, y)
    _w_int(buf, len(net.arcs))
    for tail, head, f in net.arcs:
        _w_int(buf, tail)
        _w_int(buf, head)
        _w_ttf(buf, f)

    part = state.part
    _w_int(buf, part.level_count)
    for size in part.max_cell_size:
        _w_int(buf, size)
    for level in part.cell_of:
        for c in level:
            _w_int(buf, c)

    for p in state.ordering.perm:
        _w_int(buf, p)

    _w_int(buf, state.topo.slot_count())
    for per_cell in state.topo.matrices:
        for m in per_cell:
            for s in m.slots:
                _w_int(buf, s)

    _w_int(buf, len(state.pool))
    for f in state.pool.funcs:
        _w_ttf(buf, f)

    buf.write(_END)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_snapshot(path) -> EngineState:
    with open(path, "rb") as fh:
        buf = io.BytesIO(fh.read())
    if buf.read(len(_MAGIC)) != _MAGIC:
        raise SnapshotError("not a snapshot file")
    version = _r_int(buf)
    if version != _VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")

    eps_count = _r_int(buf)
    eps = tuple(_r_str(buf) for _ in range(eps_count))
    mask = _r_int(buf)
    worker_count = _r_int(buf)
    config = CustomizationConfig(
        eps_per_level=eps,
        worker_count=worker_count,
        **{name: bool(mask & (1 << bit)) for bit, name in enumerate(_FLAGS)},
    )

    n = _r_int(buf)
    coords = None
    if _r_int(buf):
        coords = [(_r_int(buf), _r_int(buf)) for _ in range(n)]
    m = _r_int(buf)
    arcs = []
    for _ in range(m):
        tail = _r_int(buf)
        head = _r_int(buf)
        arcs.append((tail, head, _r_ttf(buf)))
    net = RoadNetwork(n, arcs, coords)
    if net.arcs != arcs:
        raise SnapshotError("snapshot arcs are not in canonical order")

    levels = _r_int(buf)
    max_sizes = [_r_int(buf) for _ in range(levels)]
    cell_of = [[_r_int(buf) for _ in range(n)] for _ in range(levels)]
    part = MultiLevelPartition(cell_of, max_sizes)
    part.validate(n)

    perm = [_r_int(buf) for _ in range(n)]
    if sorted(perm) != list(range(n)):
        raise SnapshotError("stored permutation is not a permutation")
    inv = [0] * n
    for old, new in enumerate(perm):
        inv[new] = old

    boundary = compute_boundaries(net, part)
    ordering = derive_ordering(part, boundary, perm, inv)
    topo = build_topology(net, part, boundary)
    slot_total = _r_int(buf)
    if slot_total != topo.slot_count():
        raise SnapshotError(
            f"snapshot has {slot_total} slots, topology expects {topo.slot_count()}"
        )
    for per_cell in topo.matrices:
        for mtx in per_cell:
            mtx.slots = [_r_int(buf) for _ in range(len(mtx.slots))]
            b = mtx.size
            for i in range(b):
                if mtx.slots[i * b + i] != SLOT_SELF:
                    raise SnapshotError("snapshot diagonal slot is not the self sentinel")

    pool = FunctionPool()
    pool.funcs = [_r_ttf(buf) for _ in range(_r_int(buf))]
    topo.check_pool_layout(pool)

    if buf.read(2) != _END or buf.read(1):
        raise SnapshotError("snapshot has trailing or missing bytes")
    return EngineState(net, part, ordering, boundary, topo, pool, config)
