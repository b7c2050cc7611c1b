"""Earliest-arrival queries against the time-dependent Dijkstra oracle.

Ground truth for every arrival comes from td_dijkstra_ea on the same
(reordered) network — a plain label-setting search over the original arcs
with the same exact function algebra, itself validated against brute
force in the network tests.  Query results must match it with exact
equality in exact mode; approximate mode is held to explicit relative
error bounds.  Path unpacking is re-driven over original arcs and must
reproduce the claimed travel time.
"""

import random
from fractions import Fraction

import pytest

from tdroute.customization import CustomizationConfig
from tdroute.network import generate_synthetic, td_dijkstra_ea
from tdroute.overlay import FunctionPool, OverlayStateError, build_topology
from tdroute.partition import build_partition, reorder_and_index
from tdroute.query import (
    PathInconsistencyError,
    QueryConfig,
    QueryEngine,
    search_level,
    unpack_path,
)
from tdroute.snapshot import EngineState, build_state


def _state(width, height, sizes, td="0.5", bps=4, seed=11, eps=None):
    net = generate_synthetic(width, height, td_fraction=td, bps_per_td_arc=bps, seed=seed)
    if eps is None:
        cfg = CustomizationConfig.exact(len(sizes))
    else:
        cfg = CustomizationConfig(eps_per_level=(eps,) * len(sizes))
    state, _ = build_state(net, sizes, cfg)
    return state


@pytest.fixture(scope="module")
def state2():
    """Two-level exact state on a 20x20 grid."""
    return _state(20, 20, (16, 80))


@pytest.fixture(scope="module")
def state3():
    """Three-level exact state on an 18x18 grid."""
    return _state(18, 18, (8, 36, 128), seed=23)


@pytest.fixture(scope="module")
def state3_eps():
    """Same instance as state3 but customized with a 1% band per level."""
    return _state(18, 18, (8, 36, 128), seed=23, eps="0.01")


def _random_queries(state, count, seed):
    n = state.net.vertex_count
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        s, t = rng.randrange(n), rng.randrange(n)
        if s == t:
            continue
        out.append((s, t, rng.randrange(86_400_000)))
    return out


# ----------------------------------------------------------- trivial shapes


def test_query_same_vertex_is_identity(state2):
    eng = QueryEngine(state2)
    r = eng.ea_query(7, 7, 12_345)
    assert r.arrival == 12_345
    assert r.travel == 0
    assert r.scanned_vertices == 0
    assert r.relaxed_arcs == 0
    assert r.evaluated_breakpoints == 0
    assert r.path == ((7, 0, False),)


def test_query_rejects_bad_vertex_ids(state2):
    eng = QueryEngine(state2)
    n = state2.net.vertex_count
    with pytest.raises(ValueError):
        eng.ea_query(-1, 0, 0)
    with pytest.raises(ValueError):
        eng.ea_query(0, n, 0)


def test_query_config_validates_flag_depth(state2):
    with pytest.raises(ValueError):
        QueryEngine(state2, QueryConfig(clique_flag_top_k=-1))
    with pytest.raises(ValueError):
        QueryEngine(state2, QueryConfig(clique_flag_top_k=99))


# ----------------------------------------------------------- search levels


def test_search_level_at_endpoints_is_zero(state3):
    part = state3.part
    assert search_level(5, 200, 5, part) == 0
    assert search_level(5, 200, 200, part) == 0


def test_search_level_matches_reference_rule(state3):
    part = state3.part
    rng = random.Random(3)
    levels = part.level_count

    def uncommon(a, b):
        lvl = 0
        for level in range(1, levels + 1):
            if part.cell(level, a) != part.cell(level, b):
                lvl = max(lvl, level)
        return lvl

    n = state3.net.vertex_count
    for _ in range(600):
        s, t, v = rng.randrange(n), rng.randrange(n), rng.randrange(n)
        assert search_level(s, t, v, part) == min(uncommon(s, v), uncommon(v, t))


# ------------------------------------------------- exact oracle equivalence


def test_two_level_exact_queries_match_oracle(state2):
    eng = QueryEngine(state2)
    for s, t, tau in _random_queries(state2, 300, seed=5):
        want = td_dijkstra_ea(state2.net, s, t, tau).arrival
        got = eng.ea_query(s, t, tau)
        assert got.arrival == want, (s, t, tau)
        assert got.travel == want - tau


def test_three_level_exact_queries_match_oracle(state3):
    eng = QueryEngine(state3)
    for s, t, tau in _random_queries(state3, 250, seed=6):
        want = td_dijkstra_ea(state3.net, s, t, tau).arrival
        got = eng.ea_query(s, t, tau)
        assert got.arrival == want, (s, t, tau)


def test_approximate_mode_error_within_band(state3, state3_eps):
    eng = QueryEngine(state3_eps)
    rels = []
    for s, t, tau in _random_queries(state3_eps, 250, seed=7):
        exact = td_dijkstra_ea(state3_eps.net, s, t, tau).arrival - tau
        got = eng.ea_query(s, t, tau).travel
        rel = abs(got - exact) / exact
        rels.append(rel)
    assert max(rels) <= 0.05
    assert sum(rels) / len(rels) <= 0.01


# ------------------------------------------------------- toggle soundness


def test_bound_pruning_toggle_changes_no_result(state2):
    base = QueryEngine(state2, QueryConfig(bound_pruning=True))
    off = QueryEngine(state2, QueryConfig(bound_pruning=False))
    for s, t, tau in _random_queries(state2, 120, seed=8):
        a = base.ea_query(s, t, tau)
        b = off.ea_query(s, t, tau)
        assert a.arrival == b.arrival
        assert a.path == b.path
        # pruning skips evaluations, never relaxations
        assert a.relaxed_arcs == b.relaxed_arcs
        assert a.evaluated_breakpoints <= b.evaluated_breakpoints


def test_clique_flag_depth_changes_no_exact_result(state3):
    engines = [
        QueryEngine(state3, QueryConfig(clique_flag_top_k=k))
        for k in range(state3.part.level_count + 1)
    ]
    for s, t, tau in _random_queries(state3, 120, seed=9):
        arrivals = {e.ea_query(s, t, tau).arrival for e in engines}
        assert len(arrivals) == 1, (s, t, tau)


# ------------------------------------------------------------ label hygiene


def test_consecutive_queries_do_not_leak_labels(state3):
    eng = QueryEngine(state3)
    queries = _random_queries(state3, 40, seed=10)
    first = [eng.ea_query(s, t, tau) for s, t, tau in queries]
    # interleave queries in other cells, then repeat the originals
    for s, t, tau in _random_queries(state3, 40, seed=11):
        eng.ea_query(s, t, tau)
    again = [eng.ea_query(s, t, tau) for s, t, tau in queries]
    assert first == again


# ------------------------------------------------------- search-space size


def test_overlay_query_scans_fewer_vertices_than_oracle(state2):
    eng = QueryEngine(state2)
    width = 20
    rng = random.Random(12)
    ratios = []
    for _ in range(40):
        # long-range: opposite grid quadrants
        s = rng.randrange(width // 2) * width + rng.randrange(width // 2)
        t = (
            (width // 2 + rng.randrange(width // 2)) * width
            + width // 2
            + rng.randrange(width // 2)
        )
        s, t = state2.ordering.perm[s], state2.ordering.perm[t]
        tau = rng.randrange(86_400_000)
        oracle = td_dijkstra_ea(state2.net, s, t, tau)
        r = eng.ea_query(s, t, tau)
        assert r.arrival == oracle.arrival
        ratios.append(r.scanned_vertices / oracle.scanned)
    ratios.sort()
    assert ratios[len(ratios) // 2] < 0.6


# ------------------------------------------------------------ path unpacking


def _drive(net, verts, tau):
    """Independent re-evaluation of a vertex walk on original arcs."""
    now = tau
    for a, b in zip(verts, verts[1:]):
        ids = net.arc_ids(a, b)
        assert ids, f"missing arc {a}->{b}"
        now = min(now + net.arcs[i][2].value_at(now) for i in ids)
    return now


def test_unpack_same_cell_pair_matches_exactly(state2):
    part = state2.part
    cell0 = part.cell_of[0]
    pair = None
    for v in range(state2.net.vertex_count):
        for w, _, _ in state2.net.forward[v]:
            if cell0[v] == cell0[w]:
                pair = (v, w)
                break
        if pair:
            break
    eng = QueryEngine(state2)
    r = eng.ea_query(pair[0], pair[1], 40_000_000)
    verts = unpack_path(r, state2)  # zero tolerance
    assert verts[0] == pair[0] and verts[-1] == pair[1]
    assert _drive(state2.net, verts, 40_000_000) - 40_000_000 == r.travel


def test_unpack_exact_path_reproduces_travel_time(state3):
    eng = QueryEngine(state3)
    for s, t, tau in _random_queries(state3, 60, seed=13):
        r = eng.ea_query(s, t, tau)
        verts = unpack_path(r, state3)  # zero tolerance: exact mode
        assert verts[0] == s and verts[-1] == t
        assert _drive(state3.net, verts, tau) - tau == r.travel


def test_unpack_approximate_path_within_tolerance(state3_eps):
    eng = QueryEngine(state3_eps)
    for s, t, tau in _random_queries(state3_eps, 40, seed=14):
        r = eng.ea_query(s, t, tau)
        verts = unpack_path(r, state3_eps, tolerance=Fraction("0.05"))
        driven = _drive(state3_eps.net, verts, tau) - tau
        # the driven cost is a real path cost, so it cannot beat the oracle
        exact = td_dijkstra_ea(state3_eps.net, s, t, tau).arrival - tau
        assert driven >= exact
        rel = abs(driven - r.travel) / r.travel
        assert rel <= 0.05


def test_unpack_refuses_unreachable_result(state2):
    eng = QueryEngine(state2)
    r = eng.ea_query(0, 1, 0)
    r.path = None
    with pytest.raises(ValueError):
        unpack_path(r, state2)


# ------------------------------------------------------------ state guards


def test_query_on_uncustomized_pool_raises(state2):
    net = generate_synthetic(12, 12, td_fraction="0.5", bps_per_td_arc=3, seed=31)
    part = build_partition(net, [16, 72])
    net2, part2, ordering, bs = reorder_and_index(net, part)
    topo = build_topology(net2, part2, bs)
    raw = EngineState(
        net2, part2, ordering, bs, topo, FunctionPool(), CustomizationConfig.exact(2)
    )
    eng = QueryEngine(raw)
    cells_top = part2.cell_of[-1]
    s = 0
    t = next(v for v in range(net2.vertex_count) if cells_top[v] != cells_top[s])
    with pytest.raises(OverlayStateError):
        eng.ea_query(s, t, 0)
