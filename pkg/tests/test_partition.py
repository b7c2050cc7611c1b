"""Nested partitions, boundary detection, and the boundary-first reordering.

The derived expectations come from direct scans over the structures: a
crossing-arc scan defines boundary membership, nesting is checked as
"coarse cell is constant on each fine cell", and the reordering is checked
against its two contracts (boundary prefix per level, contiguous interior
range per bottom cell) plus the permutation round-trip.
"""

import random

import pytest

from tdroute.network import (
    NetworkFormatError,
    RoadNetwork,
    generate_synthetic,
)
from tdroute.partition import (
    BoundarySet,
    MultiLevelPartition,
    PartitionError,
    build_partition,
    compute_boundaries,
    load_partition,
    reorder_and_index,
    save_partition,
)
from tdroute.plf import TTF

C = TTF.constant


def grid_net(width, height, seed=7):
    return generate_synthetic(width, height, td_fraction="0.5", bps_per_td_arc=4, seed=seed)


def path_net(n, coords=True):
    arcs = []
    for v in range(n - 1):
        arcs.append((v, v + 1, C(60_000)))
        arcs.append((v + 1, v, C(60_000)))
    cs = [(v * 1000, 0) for v in range(n)] if coords else None
    return RoadNetwork(n, arcs, cs)


# ------------------------------------------------------------ build_partition


def test_build_whole_graph_fits_top_level():
    net = grid_net(3, 3)
    part = build_partition(net, [4, 16])
    assert part.num_cells(2) == 1
    assert set(part.cell_of[1]) == {0}


def test_build_single_level_whole_graph_has_no_boundary():
    net = grid_net(4, 4)
    part = build_partition(net, [16])
    assert part.level_count == 1
    assert part.num_cells(1) == 1
    bs = compute_boundaries(net, part)
    assert bs.per_level[1] == []
    assert bs.count(1) == 0


def test_build_4x4_two_levels():
    net = grid_net(4, 4)
    part = build_partition(net, [4, 16])
    assert part.level_count == 2
    assert part.num_cells(2) == 1
    assert part.num_cells(1) == 4
    for c in range(4):
        assert len(part.members(1, c)) == 4
    part.validate(16)  # nesting + coverage + dense ids


def test_build_respects_size_maxima():
    net = grid_net(7, 5)  # 35 vertices, sizes that do not divide evenly
    part = build_partition(net, [4, 16])
    for level in (1, 2):
        size = [0] * part.num_cells(level)
        for c in part.cell_of[level - 1]:
            size[c] += 1
        assert max(size) <= part.max_cell_size[level - 1]


def test_build_nesting_is_constant_per_fine_cell():
    net = grid_net(6, 6)
    part = build_partition(net, [4, 12, 36])
    for level in range(1, part.level_count):
        parent = {}
        for v in range(net.vertex_count):
            fine = part.cell(level, v)
            coarse = part.cell(level + 1, v)
            assert parent.setdefault(fine, coarse) == coarse


def test_build_rejects_bad_sizes():
    net = grid_net(3, 3)
    with pytest.raises(PartitionError):
        build_partition(net, [0, 4])
    with pytest.raises(PartitionError):
        build_partition(net, [8, 4])
    with pytest.raises(PartitionError):
        build_partition(net, [4, 4])


def test_build_deterministic_and_bfs_fallback_matches_contract():
    net = grid_net(5, 5)
    assert build_partition(net, [4, 12]) == build_partition(net, [4, 12])

    bare = RoadNetwork(net.vertex_count, net.arcs, coords=None)
    part = build_partition(bare, [4, 12])
    part.validate(25)
    assert build_partition(bare, [4, 12]) == part


def test_subcells_listing():
    net = grid_net(4, 4)
    part = build_partition(net, [4, 16])
    subs = part.subcells(2)
    assert subs == [[0, 1, 2, 3]]


# --------------------------------------------------------------------- mlp IO


def test_mlp_round_trip(tmp_path):
    net = grid_net(5, 4)
    part = build_partition(net, [4, 10, 20])
    path = tmp_path / "grid.mlp"
    save_partition(part, path)
    again = load_partition(path, net)
    assert again == part
    # a second save of the reloaded partition is byte-identical
    path2 = tmp_path / "grid2.mlp"
    save_partition(again, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_mlp_densifies_sparse_ids(tmp_path):
    net = path_net(3)
    path = tmp_path / "sparse.mlp"
    path.write_text("mlp 1 3 1\n7\n7\n42\n")
    part = load_partition(path, net)
    assert part.cell_of[0] == [0, 0, 1]


def test_mlp_rejects_double_assignment(tmp_path):
    # a vertex listed twice makes the line count disagree with the header
    net = path_net(3)
    path = tmp_path / "double.mlp"
    path.write_text("mlp 1 3 1\n0\n0\n1\n1\n")
    with pytest.raises(NetworkFormatError, match="assignment lines"):
        load_partition(path, net)


def test_mlp_rejects_nesting_violation(tmp_path):
    # vertices 0 and 1 share level-1 cell 0 but sit in different level-2 cells
    net = path_net(3)
    path = tmp_path / "nonnested.mlp"
    path.write_text("mlp 1 3 2\n0 0\n0 1\n1 1\n")
    with pytest.raises(PartitionError, match=r"vertex 1: level-1 cell 0 spans"):
        load_partition(path, net)


@pytest.mark.parametrize(
    "text, message",
    [
        ("", "empty"),
        ("mlp 2 3 1\n0\n0\n0\n", "bad header"),
        ("mlp 1 x 1\n0\n0\n0\n", "bad header"),
        ("mlp 1 4 1\n0\n0\n0\n0\n", "partition is for 4 vertices"),
        ("mlp 1 3 2\n0 0\n0\n0 0\n", "expected 2 cell ids"),
        ("mlp 1 3 1\n0\nx\n0\n", "non-integer"),
    ],
)
def test_mlp_parse_errors(tmp_path, text, message):
    net = path_net(3)
    path = tmp_path / "bad.mlp"
    path.write_text(text)
    with pytest.raises(NetworkFormatError, match=message):
        load_partition(path, net)


# --------------------------------------------------- boundaries and reordering


def crossing_scan(net, part):
    """Independent definition of the boundary sets: vertices incident to an
    arc whose endpoints sit in different cells of the level."""
    out = {}
    for level in range(1, part.level_count + 1):
        marked = set()
        for tail, head, _ in net.arcs:
            if part.cell(level, tail) != part.cell(level, head):
                marked.add(tail)
                marked.add(head)
        out[level] = marked
    return out


def test_boundaries_match_crossing_scan():
    net = grid_net(8, 8)
    part = build_partition(net, [8, 32])
    bs = compute_boundaries(net, part)
    scan = crossing_scan(net, part)
    for level in (1, 2):
        assert set(bs.per_level[level]) == scan[level]
        assert all(bs.is_boundary(level, v) for v in scan[level])
        # per-cell lists are a partition of the level's boundary set
        merged = []
        for c in range(part.num_cells(level)):
            cell_vs = bs.per_cell[(level, c)]
            assert all(part.cell(level, v) == c for v in cell_vs)
            merged.extend(cell_vs)
        assert sorted(merged) == bs.per_level[level]


def test_boundary_nesting_coarse_implies_fine():
    net = grid_net(8, 8)
    part = build_partition(net, [8, 32])
    bs = compute_boundaries(net, part)
    assert set(bs.per_level[2]) <= set(bs.per_level[1])


def test_disconnected_cells_have_no_boundary():
    # two disjoint 3-vertex paths, one cell each: nothing crosses
    arcs = []
    for base in (0, 3):
        for v in (base, base + 1):
            arcs.append((v, v + 1, C(1000)))
            arcs.append((v + 1, v, C(1000)))
    net = RoadNetwork(6, arcs)
    part = MultiLevelPartition([[0, 0, 0, 1, 1, 1]])
    part.validate(6)
    bs = compute_boundaries(net, part)
    assert bs.per_level[1] == []
    net2, _, ordering, bs2 = reorder_and_index(net, part)
    assert ordering.boundary_count[1] == 0
    assert bs2.per_level[1] == []
    assert sorted(ordering.perm) == list(range(6))


def test_reorder_inverse_recovers_original():
    net = grid_net(6, 5)
    part = build_partition(net, [4, 12])
    net2, part2, ordering, _ = reorder_and_index(net, part)
    inv = [0] * net.vertex_count
    for old, new in enumerate(ordering.perm):
        inv[new] = old
    assert inv == ordering.inv
    back = [(inv[t], inv[h], f) for t, h, f in net2.arcs]
    assert sorted(back, key=lambda a: (a[0], a[1])) == net.arcs
    assert [net2.coords[ordering.perm[v]] for v in range(net.vertex_count)] == net.coords
    assert part2.permuted(ordering.inv) == part


def test_reorder_boundary_prefix_and_crossing_arcs_8x8():
    net = grid_net(8, 8)
    part = build_partition(net, [8, 32])
    net2, part2, ordering, bs2 = reorder_and_index(net, part)
    for level in (1, 2):
        cnt = ordering.boundary_count[level]
        assert bs2.per_level[level] == list(range(cnt))
        for tail, head, _ in net2.arcs:
            if part2.cell(level, tail) != part2.cell(level, head):
                assert tail < cnt and head < cnt
    # coarse boundary precedes fine-only boundary
    assert ordering.boundary_count[2] <= ordering.boundary_count[1]


def test_reorder_interior_ranges_partition_the_rest():
    net = grid_net(8, 8)
    part = build_partition(net, [8, 32])
    _, part2, ordering, _ = reorder_and_index(net, part)
    n = net.vertex_count
    b1 = ordering.boundary_count[1]
    covered = []
    for c, (start, end) in enumerate(ordering.level1_interior):
        for v in range(start, end):
            assert part2.cell(1, v) == c
        covered.extend(range(start, end))
    assert sorted(covered) == list(range(b1, n))
    assert ordering.max_level1_cell == max(
        len(part2.members(1, c)) for c in range(part2.num_cells(1))
    )


def test_reorder_deterministic():
    net = grid_net(7, 7)
    part = build_partition(net, [8, 24])
    a = reorder_and_index(net, part)
    b = reorder_and_index(net, part)
    assert a[2].perm == b[2].perm
    assert a[0].arcs == b[0].arcs


def test_reorder_all_boundary_leaves_empty_ranges():
    # 1x4 path split into 4 singleton cells: every vertex is boundary
    net = path_net(4)
    part = MultiLevelPartition([[0, 1, 2, 3], [0, 0, 1, 1]])
    part.validate(4)
    _, _, ordering, _ = reorder_and_index(net, part)
    assert ordering.boundary_count[1] == 4
    assert all(start == end for start, end in ordering.level1_interior)


def test_permuted_partition_moves_with_vertices():
    part = MultiLevelPartition([[0, 0, 1, 1]])
    perm = [2, 3, 0, 1]
    assert part.permuted(perm).cell_of[0] == [1, 1, 0, 0]


def test_random_instances_keep_all_reorder_invariants():
    rng = random.Random(20260816)
    for _ in range(6):
        w = rng.randrange(3, 9)
        h = rng.randrange(3, 9)
        net = grid_net(w, h, seed=rng.randrange(1 << 30))
        sizes = sorted({rng.randrange(2, 6), rng.randrange(6, 20), rng.randrange(20, 80)})
        part = build_partition(net, sizes)
        part.validate(net.vertex_count)
        net2, part2, ordering, bs2 = reorder_and_index(net, part)
        scan = crossing_scan(net2, part2)
        for level in range(1, part.level_count + 1):
            cnt = ordering.boundary_count[level]
            assert scan[level] == set(range(cnt))
            assert bs2.per_level[level] == sorted(scan[level])
        assert sorted(ordering.perm) == list(range(net.vertex_count))
