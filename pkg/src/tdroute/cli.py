"""Command-line pipeline driver and benchmark harness.

Subcommands cover the whole pipeline in stage order: `generate` (or an
existing `tdgr` file) -> `partition` -> `customize` -> `query` / `update` /
`verify`.  Every stats file is a deterministic CSV — identical inputs and
seed reproduce it byte-for-byte — so wall-clock timings go to stderr, never
into the CSVs.  Each flag falls back to an environment variable named
TDROUTE_<FLAG> (e.g. TDROUTE_SEED) when not given on the command line.

Query and update files use the same external vertex ids as the network
file; the snapshot's internal numbering stays an implementation detail.
"""

from __future__ import annotations

import argparse
import os
import random
import sys
import time
from dataclasses import dataclass
from fractions import Fraction

from .customization import CustomizationConfig, customize, parse_eps
from .live_update import apply_update_batch, load_updates
from .network import generate_synthetic, load_network, save_network, td_dijkstra_ea
from .overlay import FunctionPool, build_topology
from .partition import build_partition, load_partition, reorder_and_index, save_partition
from .plf import PERIOD_MS
from .query import PathInconsistencyError, QueryEngine, unpack_path
from .snapshot import EngineState, load_snapshot, save_snapshot

ENV_PREFIX = "TDROUTE_"

_PRODUCED_BY = {
    "network": "generate",
    "partition": "partition",
    "snapshot": "customize",
    "queries": "query --save-queries",
    "updates": "a `tdu` update file",
}


class CliError(Exception):
    """Bad invocation or unusable inputs; maps to exit status 2."""


@dataclass(frozen=True)
class PipelineManifest:
    """Everything a pipeline stage may need, resolved from flags and
    environment fallbacks.  Path fields reference earlier stages'
    artifacts; validation points at the stage that produces a missing
    file, so stage order is enforced by construction."""

    network: str | None = None
    partition: str | None = None
    snapshot: str | None = None
    levels: tuple[int, ...] = ()
    eps: tuple[str, ...] = ()
    queries: str | None = None
    updates: str | None = None
    seed: int = 42
    workers: int = 1
    out: str | None = None

    def require_files(self, *fields) -> None:
        for name in fields:
            path = getattr(self, name)
            if path is None:
                raise CliError(f"--{name} is required for this stage")
            if not os.path.exists(path):
                hint = _PRODUCED_BY.get(name)
                extra = f" (produced by the `{hint}` stage)" if hint else ""
                raise CliError(f"--{name} file not found: {path}{extra}")

    def require_out(self) -> str:
        if not self.out:
            raise CliError("--out is required for this stage")
        return self.out


def _manifest(args) -> PipelineManifest:
    fields = {}
    for name in PipelineManifest.__dataclass_fields__:
        if hasattr(args, name):
            fields[name] = getattr(args, name)
    return PipelineManifest(**fields)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _parse_levels(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(t) for t in text.split(","))
    except ValueError:
        raise CliError(f"--levels must be comma-separated integers, got {text!r}")
    if not sizes or any(s < 1 for s in sizes):
        raise CliError(f"--levels must be positive cell sizes, got {text!r}")
    return sizes


def _parse_eps_list(text: str, level_count: int) -> tuple[str, ...]:
    parts = tuple(t.strip() for t in text.split(","))
    if len(parts) == 1:
        parts = parts * level_count
    if len(parts) != level_count:
        raise CliError(
            f"--eps needs 1 or {level_count} comma-separated values, got {len(parts)}"
        )
    for p in parts:
        try:
            band = parse_eps(p)
        except (ValueError, ZeroDivisionError) as exc:
            raise CliError(f"bad --eps value {p!r}: {exc}") from None
        if band < 0:
            raise CliError(f"--eps values must be >= 0, got {p!r}")
    return parts


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        w, _, h = text.partition("x")
        return int(w), int(h)
    except ValueError:
        raise CliError(f"--grid must look like 100x100, got {text!r}")


# ------------------------------------------------------------- query batches


def save_queries(queries, path) -> None:
    """Write a query batch: header `tdq 1 <count>`, then one
    `q <source> <target> <departure_ms>` line per query."""
    lines = [f"tdq 1 {len(queries)}"]
    lines.extend(f"q {s} {t} {tau}" for s, t, tau in queries)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_queries(path) -> list:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise CliError(f"empty query file {path}")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "tdq" or head[1] != "1":
        raise CliError(f"bad query file header: {lines[0]!r}")
    if int(head[2]) != len(lines) - 1:
        raise CliError(
            f"query file declares {head[2]} queries, has {len(lines) - 1}"
        )
    out = []
    for lineno, ln in enumerate(lines[1:], start=2):
        toks = ln.split()
        if len(toks) != 4 or toks[0] != "q":
            raise CliError(f"{path}:{lineno}: expected `q <s> <t> <tau_ms>`")
        try:
            s, t, tau = int(toks[1]), int(toks[2]), int(toks[3])
        except ValueError:
            raise CliError(f"{path}:{lineno}: non-integer field") from None
        if tau < 0 or tau >= PERIOD_MS:
            raise CliError(f"{path}:{lineno}: departure {tau} outside [0, {PERIOD_MS})")
        out.append((s, t, tau))
    return out


def random_queries(vertex_count: int, count: int, seed: int) -> list:
    rng = random.Random(seed)
    return [
        (rng.randrange(vertex_count), rng.randrange(vertex_count), rng.randrange(PERIOD_MS))
        for _ in range(count)
    ]


def _resolve_queries(manifest: PipelineManifest, vertex_count: int) -> list:
    """--queries is either a batch-file path or an integer count of random
    queries drawn deterministically from --seed."""
    spec = manifest.queries
    if spec is None:
        raise CliError("--queries is required (a `tdq` file or an integer count)")
    try:
        count = int(spec)
    except ValueError:
        manifest.require_files("queries")
        return load_queries(spec)
    if count < 1:
        raise CliError(f"--queries count must be >= 1, got {count}")
    return random_queries(vertex_count, count, manifest.seed)


# ------------------------------------------------------------------- stages


def _cmd_generate(args) -> int:
    manifest = _manifest(args)
    out = manifest.require_out()
    width, height = _parse_grid(args.grid)
    t0 = time.perf_counter()
    net = generate_synthetic(
        width, height, td_fraction=args.td_fraction,
        bps_per_td_arc=args.bps, seed=manifest.seed,
    )
    save_network(net, out)
    _log(
        f"generate: {net.vertex_count} vertices, {net.arc_count} arcs "
        f"({args.td_fraction} td, {args.bps} bps) -> {out} "
        f"[{time.perf_counter() - t0:.2f}s]"
    )
    return 0


def _cmd_partition(args) -> int:
    manifest = _manifest(args)
    manifest.require_files("network")
    out = manifest.require_out()
    sizes = _parse_levels(args.levels)
    t0 = time.perf_counter()
    net = load_network(manifest.network)
    part = build_partition(net, sizes)
    save_partition(part, out)
    cells = [max(part.cell_of[i]) + 1 for i in range(part.level_count)]
    _log(
        f"partition: levels {list(sizes)} -> cells {cells} -> {out} "
        f"[{time.perf_counter() - t0:.2f}s]"
    )
    return 0


def _build_state(manifest: PipelineManifest, eps_text: str, workers: int):
    """Shared partition+customize pipeline for customize/verify."""
    net = load_network(manifest.network)
    part = load_partition(manifest.partition, net)
    eps = _parse_eps_list(eps_text, part.level_count)
    cfg = CustomizationConfig(eps_per_level=eps, worker_count=workers)
    net2, part2, ordering, bs = reorder_and_index(net, part)
    topo = build_topology(net2, part2, bs)
    pool = FunctionPool()
    stats = customize(net2, topo, pool, cfg)
    return EngineState(net2, part2, ordering, bs, topo, pool, cfg), stats


def _stats_csv(stats) -> str:
    """Per-level customization stats without the wall-time column, so the
    file is identical across reruns."""
    lines = ["level,bps,td_clq_arcs_pct,td_arc_cplx"]
    for r in stats.rows:
        lines.append(f"{r.level},{r.bps},{r.td_clq_arcs_pct:.4f},{r.td_arc_cplx:.4f}")
    return "\n".join(lines) + "\n"


def _cmd_customize(args) -> int:
    manifest = _manifest(args)
    manifest.require_files("network", "partition")
    out = manifest.require_out()
    t0 = time.perf_counter()
    state, stats = _build_state(manifest, args.eps, manifest.workers)
    save_snapshot(state, out)
    stats_path = args.stats or out + ".stats.csv"
    with open(stats_path, "w", encoding="ascii") as fh:
        fh.write(_stats_csv(stats))
    for row in stats.rows:
        _log(
            f"customize: level {row.level}: {row.bps} bps, "
            f"{row.td_clq_arcs_pct:.2f}% td slots, "
            f"avg {row.td_arc_cplx:.2f} bps/td-slot [{row.time_s:.2f}s]"
        )
    _log(
        f"customize: snapshot -> {out}, stats -> {stats_path} "
        f"[{time.perf_counter() - t0:.2f}s total]"
    )
    return 0


def _fmt_ms(value) -> str:
    return "" if value is None else str(value)


def _rel_err(got, want) -> Fraction:
    """Exact relative travel-time error; zero-travel oracle pairs only
    count as zero error when the engine agrees exactly."""
    if want == 0:
        return Fraction(0) if got == want else Fraction(1)
    g = Fraction(int(got.numerator), int(got.denominator)) if not isinstance(got, int) else Fraction(got)
    w = Fraction(int(want.numerator), int(want.denominator)) if not isinstance(want, int) else Fraction(want)
    return abs(g - w) / w


def _cmd_query(args) -> int:
    manifest = _manifest(args)
    manifest.require_files("snapshot")
    out = manifest.require_out()
    state = load_snapshot(manifest.snapshot)
    n = state.net.vertex_count
    queries = _resolve_queries(manifest, n)
    bad = [q for q in queries if not (0 <= q[0] < n and 0 <= q[1] < n)]
    if bad:
        raise CliError(f"query vertex ids outside [0, {n}): {bad[:3]}")
    if args.save_queries:
        save_queries(queries, args.save_queries)
        _log(f"query: batch of {len(queries)} -> {args.save_queries}")
    perm = state.ordering.perm
    engine = QueryEngine(state)
    rows = []
    sums = [0, 0, 0]
    errs = []
    t0 = time.perf_counter()
    for s, t, tau in queries:
        r = engine.ea_query(perm[s], perm[t], tau)
        row = [
            "q", s, t, tau, _fmt_ms(r.arrival_ms), _fmt_ms(r.travel_ms),
            r.scanned_vertices, r.relaxed_arcs, r.evaluated_breakpoints,
        ]
        sums[0] += r.scanned_vertices
        sums[1] += r.relaxed_arcs
        sums[2] += r.evaluated_breakpoints
        if args.oracle:
            want = td_dijkstra_ea(state.net, perm[s], perm[t], tau)
            row.append(_fmt_ms(want.arrival_ms))
            if want.arrival is None or r.arrival is None:
                err = Fraction(0) if want.arrival == r.arrival else Fraction(1)
            else:
                err = _rel_err(r.travel, want.arrival - tau)
            errs.append(err)
            row.append(f"{float(err):.6f}")
        rows.append(row)
    elapsed = time.perf_counter() - t0
    header = [
        "kind", "source", "target", "departure_ms", "arrival_ms", "travel_ms",
        "scanned_vertices", "relaxed_arcs", "evaluated_breakpoints",
    ]
    if args.oracle:
        header += ["oracle_arrival_ms", "rel_err"]
    m = len(queries)
    summary = [
        "summary", m, "", "", "", "",
        f"{sums[0] / m:.2f}", f"{sums[1] / m:.2f}", f"{sums[2] / m:.2f}",
    ]
    if args.oracle:
        summary.append("")
        summary.append(
            f"avg={float(sum(errs) / m):.6f} max={float(max(errs)):.6f}"
        )
    with open(out, "w", encoding="ascii") as fh:
        fh.write(",".join(str(c) for c in header) + "\n")
        for row in rows + [summary]:
            fh.write(",".join(str(c) for c in row) + "\n")
    _log(
        f"query: {m} queries in {elapsed:.2f}s "
        f"({1000 * elapsed / m:.3f} ms/query) -> {out}"
    )
    if args.oracle:
        _log(
            f"query: oracle errors avg={float(sum(errs) / m):.6f} "
            f"max={float(max(errs)):.6f}"
        )
    return 0


def _cmd_update(args) -> int:
    manifest = _manifest(args)
    manifest.require_files("snapshot", "updates")
    out = manifest.require_out()
    state = load_snapshot(manifest.snapshot)
    batch = load_updates(manifest.updates)
    perm = state.ordering.perm
    n = state.net.vertex_count
    for u in batch.updates:
        if not (0 <= u.tail < n and 0 <= u.head < n):
            raise CliError(f"update arc {u.tail}->{u.head} outside [0, {n})")
    internal = type(batch)(
        tuple(
            type(u)(perm[u.tail], perm[u.head], u.horizon, u.points)
            for u in batch.updates
        ),
        batch.now,
        batch.significance_threshold,
    )
    t0 = time.perf_counter()
    changes, stats = apply_update_batch(state, internal)
    elapsed = time.perf_counter() - t0
    save_snapshot(state, out)
    stats_path = args.stats or out + ".stats.csv"
    metrics = [
        ("spliced_arcs", stats.spliced_arcs),
        ("cells_touched", stats.cells_touched),
        ("profile_searches", stats.profile_searches),
        ("slots_inspected", stats.slots_inspected),
        ("slots_replaced", stats.slots_replaced),
        ("affected_cells", sum(1 for v in changes.affected.values() if v)),
        ("changed_pairs", len(changes.intervals)),
    ]
    with open(stats_path, "w", encoding="ascii") as fh:
        fh.write("metric,value\n")
        for k, v in metrics:
            fh.write(f"{k},{v}\n")
    _log(
        "update: "
        + ", ".join(f"{k}={v}" for k, v in metrics)
        + f" [{elapsed:.2f}s] -> {out}"
    )
    return 0


def _cmd_verify(args) -> int:
    manifest = _manifest(args)
    if manifest.snapshot:
        manifest.require_files("snapshot")
        state = load_snapshot(manifest.snapshot)
    else:
        manifest.require_files("network", "partition")
        state, _ = _build_state(manifest, args.eps, manifest.workers)
    if any(parse_eps(e) for e in state.config.eps_per_level):
        raise CliError(
            "verify needs an exact-mode state (eps all 0); approximate "
            "snapshots have no equality oracle"
        )
    state.topo.check_pool_layout(state.pool)
    n = state.net.vertex_count
    queries = _resolve_queries(manifest, n)
    perm = state.ordering.perm
    engine = QueryEngine(state)
    mismatches = 0
    t0 = time.perf_counter()
    for s, t, tau in queries:
        r = engine.ea_query(perm[s], perm[t], tau)
        want = td_dijkstra_ea(state.net, perm[s], perm[t], tau)
        if r.arrival != want.arrival:
            mismatches += 1
            if mismatches <= 5:
                _log(
                    f"verify: MISMATCH {s}->{t} @ {tau}: "
                    f"engine {r.arrival}, oracle {want.arrival}"
                )
            continue
        if r.path is not None:
            try:
                unpack_path(r, state)
            except PathInconsistencyError as exc:
                mismatches += 1
                if mismatches <= 5:
                    _log(f"verify: BAD PATH {s}->{t} @ {tau}: {exc}")
    elapsed = time.perf_counter() - t0
    print(f"{mismatches} mismatches / {len(queries)} queries")
    _log(f"verify: done in {elapsed:.2f}s")
    return 1 if mismatches else 0


# ------------------------------------------------------------------- parser


def _add(parser, flag, **kw):
    """add_argument with a TDROUTE_<FLAG> environment fallback."""
    env = ENV_PREFIX + flag.lstrip("-").replace("-", "_").upper()
    if env in os.environ:
        raw = os.environ[env]
        kw["default"] = kw["type"](raw) if "type" in kw else raw
        kw.pop("required", None)
    parser.add_argument(flag, **kw)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tdroute",
        description="Time-dependent route planning pipeline: generate, "
        "partition, customize, query, update, verify.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic grid network (tdgr)")
    _add(p, "--grid", default="100x100", help="grid size WxH (default 100x100)")
    _add(p, "--td-fraction", default="0.275", help="share of time-dependent arcs")
    _add(p, "--bps", type=int, default=13, help="breakpoints per td arc")
    _add(p, "--seed", type=int, default=42)
    _add(p, "--out", required=True, help="output network file")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("partition", help="build the multi-level partition")
    _add(p, "--network", required=True)
    _add(p, "--levels", required=True, help="max cell sizes, e.g. 16,256,4096")
    _add(p, "--out", required=True, help="output partition file")
    p.set_defaults(func=_cmd_partition)

    p = sub.add_parser("customize", help="compute overlay shortcut functions")
    _add(p, "--network", required=True)
    _add(p, "--partition", required=True)
    _add(p, "--eps", default="0", help="per-level bands, e.g. 0,0.001,0.01")
    _add(p, "--workers", type=int, default=1)
    _add(p, "--out", required=True, help="output snapshot file")
    _add(p, "--stats", default=None, help="stats CSV (default <out>.stats.csv)")
    p.set_defaults(func=_cmd_customize)

    p = sub.add_parser("query", help="run earliest-arrival queries")
    _add(p, "--snapshot", required=True)
    _add(p, "--queries", required=True, help="tdq file, or an integer count")
    _add(p, "--seed", type=int, default=42, help="seed for a random batch")
    _add(p, "--out", required=True, help="results CSV")
    _add(p, "--save-queries", default=None, help="also write the batch (tdq)")
    p.add_argument(
        "--oracle", action="store_true",
        help="run the exact oracle per query and add error columns",
    )
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("update", help="apply a live-traffic update batch")
    _add(p, "--snapshot", required=True)
    _add(p, "--updates", required=True, help="tdu update batch file")
    _add(p, "--out", required=True, help="updated snapshot file")
    _add(p, "--stats", default=None, help="stats CSV (default <out>.stats.csv)")
    p.set_defaults(func=_cmd_update)

    p = sub.add_parser(
        "verify", help="exact oracle equivalence; exit 0 iff 0 mismatches"
    )
    _add(p, "--snapshot", default=None, help="customized exact snapshot")
    _add(p, "--network", default=None, help="alternative: build from network...")
    _add(p, "--partition", default=None, help="...plus partition")
    _add(p, "--eps", default="0")
    _add(p, "--workers", type=int, default=1)
    _add(p, "--queries", required=True, help="tdq file, or an integer count")
    _add(p, "--seed", type=int, default=42)
    p.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        _log(f"tdroute {args.command}: error: {exc}")
        return 2
    except (OSError, ValueError) as exc:
        _log(f"tdroute {args.command}: error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
