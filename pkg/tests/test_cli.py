"""End-to-end pipeline driver: stage order, deterministic artifacts,
environment fallbacks, and honest verify exit codes.

The CLI is exercised in-process through main(argv); every stage runs on a
small grid so the whole module stays fast.  Determinism assertions compare
artifact bytes, which is exactly the contract the CSVs promise (no
wall-clock columns).
"""

import os

import pytest

from tdroute.cli import CliError, load_queries, main, random_queries, save_queries
from tdroute.live_update import generate_updates, save_updates
from tdroute.network import load_network
from tdroute.plf import TTF
from tdroute.snapshot import load_snapshot, save_snapshot


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """network + partition + exact snapshot for a 6x6 grid, built once."""
    root = tmp_path_factory.mktemp("pipeline")
    paths = {
        "network": str(root / "net.tdgr"),
        "partition": str(root / "part.tdp"),
        "snapshot": str(root / "state.tds"),
    }
    assert main([
        "generate", "--grid", "6x6", "--td-fraction", "0.5", "--bps", "5",
        "--seed", "97", "--out", paths["network"],
    ]) == 0
    assert main([
        "partition", "--network", paths["network"], "--levels", "6,18",
        "--out", paths["partition"],
    ]) == 0
    assert main([
        "customize", "--network", paths["network"], "--partition",
        paths["partition"], "--eps", "0", "--out", paths["snapshot"],
    ]) == 0
    return paths


def test_pipeline_artifacts_exist(pipeline):
    for path in pipeline.values():
        assert os.path.getsize(path) > 0
    assert os.path.getsize(pipeline["snapshot"] + ".stats.csv") > 0


def test_query_csv_shape_and_exactness(pipeline, tmp_path):
    out = str(tmp_path / "results.csv")
    code = main([
        "query", "--snapshot", pipeline["snapshot"], "--queries", "60",
        "--seed", "3", "--out", out, "--oracle",
    ])
    assert code == 0
    lines = open(out, encoding="ascii").read().splitlines()
    header = lines[0].split(",")
    assert header[:4] == ["kind", "source", "target", "departure_ms"]
    assert "rel_err" in header
    assert len(lines) == 62  # header + 60 rows + summary
    err_col = header.index("rel_err")
    for ln in lines[1:-1]:
        cells = ln.split(",")
        assert cells[0] == "q"
        assert cells[err_col] == "0.000000"  # exact mode matches the oracle
    assert lines[-1].startswith("summary,60,")
    assert "avg=0.000000 max=0.000000" in lines[-1]


def test_query_accepts_batch_file(pipeline, tmp_path):
    net = load_network(pipeline["network"])
    batch = str(tmp_path / "batch.tdq")
    save_queries(random_queries(net.vertex_count, 25, seed=8), batch)
    out1 = str(tmp_path / "from-file.csv")
    out2 = str(tmp_path / "from-count.csv")
    assert main(["query", "--snapshot", pipeline["snapshot"], "--queries",
                 batch, "--out", out1]) == 0
    assert main(["query", "--snapshot", pipeline["snapshot"], "--queries",
                 "25", "--seed", "8", "--out", out2]) == 0
    assert open(out1).read() == open(out2).read()


def test_save_queries_round_trip(tmp_path):
    queries = random_queries(36, 10, seed=5)
    path = str(tmp_path / "q.tdq")
    save_queries(queries, path)
    assert load_queries(path) == queries
    (tmp_path / "bad.tdq").write_text("tdq 1 2\nq 0 1 5\n", encoding="ascii")
    with pytest.raises(CliError):
        load_queries(str(tmp_path / "bad.tdq"))
    (tmp_path / "bad2.tdq").write_text("tdq 1 1\nq 0 1\n", encoding="ascii")
    with pytest.raises(CliError):
        load_queries(str(tmp_path / "bad2.tdq"))


def test_customize_is_deterministic(pipeline, tmp_path):
    snap2 = str(tmp_path / "again.tds")
    assert main([
        "customize", "--network", pipeline["network"], "--partition",
        pipeline["partition"], "--eps", "0", "--out", snap2,
    ]) == 0
    assert open(pipeline["snapshot"], "rb").read() == open(snap2, "rb").read()
    assert (
        open(pipeline["snapshot"] + ".stats.csv").read()
        == open(snap2 + ".stats.csv").read()
    )


def test_query_csv_is_deterministic(pipeline, tmp_path):
    a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    for out in (a, b):
        assert main(["query", "--snapshot", pipeline["snapshot"],
                     "--queries", "40", "--seed", "11", "--out", out]) == 0
    assert open(a).read() == open(b).read()


def test_update_stage_and_verify(pipeline, tmp_path):
    net = load_network(pipeline["network"])
    batch = generate_updates(net, 5, seed=13, significance_threshold=0)
    upd_path = str(tmp_path / "batch.tdu")
    save_updates(batch, upd_path)
    out = str(tmp_path / "updated.tds")
    assert main(["update", "--snapshot", pipeline["snapshot"], "--updates",
                 upd_path, "--out", out]) == 0
    stats = open(out + ".stats.csv", encoding="ascii").read().splitlines()
    assert stats[0] == "metric,value"
    metrics = dict(ln.split(",") for ln in stats[1:])
    assert int(metrics["spliced_arcs"]) >= 1
    assert main(["verify", "--snapshot", out, "--queries", "80",
                 "--seed", "4"]) == 0


def test_verify_reports_zero_mismatches(pipeline, capsys):
    assert main(["verify", "--snapshot", pipeline["snapshot"], "--queries",
                 "60", "--seed", "9"]) == 0
    assert "0 mismatches / 60 queries" in capsys.readouterr().out


def test_verify_catches_a_corrupted_snapshot(pipeline, tmp_path, capsys):
    state = load_snapshot(pipeline["snapshot"])
    for ref in range(len(state.pool.funcs)):
        state.pool.replace(ref, TTF([(0, 1)]))  # absurdly fast shortcuts
    bad = str(tmp_path / "corrupt.tds")
    save_snapshot(state, bad)
    code = main(["verify", "--snapshot", bad, "--queries", "60", "--seed", "9"])
    assert code == 1
    out = capsys.readouterr().out
    assert "mismatches / 60 queries" in out
    assert not out.startswith("0 mismatches")


def test_verify_refuses_approximate_snapshots(pipeline, tmp_path):
    snap = str(tmp_path / "approx.tds")
    assert main([
        "customize", "--network", pipeline["network"], "--partition",
        pipeline["partition"], "--eps", "0.01", "--out", snap,
    ]) == 0
    assert main(["verify", "--snapshot", snap, "--queries", "10"]) == 2


def test_stage_order_is_enforced(tmp_path):
    missing = str(tmp_path / "nope.tdgr")
    assert main(["partition", "--network", missing, "--levels", "4",
                 "--out", str(tmp_path / "p.tdp")]) == 2
    assert main(["customize", "--network", missing, "--partition",
                 str(tmp_path / "p.tdp"), "--out", str(tmp_path / "s.tds")]) == 2
    assert main(["query", "--snapshot", str(tmp_path / "s.tds"),
                 "--queries", "5", "--out", str(tmp_path / "r.csv")]) == 2


def test_bad_flag_values_exit_2(pipeline, tmp_path):
    out = str(tmp_path / "x")
    assert main(["partition", "--network", pipeline["network"],
                 "--levels", "banana", "--out", out]) == 2
    assert main(["customize", "--network", pipeline["network"], "--partition",
                 pipeline["partition"], "--eps", "-0.5", "--out", out]) == 2
    assert main(["customize", "--network", pipeline["network"], "--partition",
                 pipeline["partition"], "--eps", "0,0,0", "--out", out]) == 2
    assert main(["query", "--snapshot", pipeline["snapshot"], "--queries",
                 "0", "--out", out]) == 2


def test_environment_fallback_for_flags(pipeline, tmp_path, monkeypatch):
    flagged = str(tmp_path / "flagged.csv")
    assert main(["query", "--snapshot", pipeline["snapshot"], "--queries",
                 "15", "--seed", "23", "--out", flagged]) == 0
    monkeypatch.setenv("TDROUTE_SEED", "23")
    from_env = str(tmp_path / "from-env.csv")
    assert main(["query", "--snapshot", pipeline["snapshot"], "--queries",
                 "15", "--out", from_env]) == 0
    assert open(flagged).read() == open(from_env).read()
