"""Benchmark harness: single runs, weak scaling, and full verification.

Wall-clock numbers are reported for orientation only; every correctness
gate is a count, byte volume, or result equality, since timings depend on
the host.  Communication time is defined strictly as time spent blocked
inside collective operations.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import io
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction

from . import cluster as cl
from .queries import QUERY_IDS, oracle_run, run_query, variants_for
from .tpch import build_database, env_seed

REPORT_COLUMNS = [
    "query", "variant", "P", "sf", "walltime_ms", "comm_ms",
    "comm_fraction", "bytes_sent", "phase_bytes", "rows_scanned_per_node",
]

# cardinality limits re-checked on every verification run
ROW_LIMITS = {1: 6, 2: 100, 3: 10, 4: 5, 5: 5, 14: 1, 18: 100, 21: 100}

DEFAULT_MEMORY_BUDGET = 4 << 30


@dataclass
class BenchRow:
    query: int
    variant: str
    P: int
    sf: str
    walltime_ms: float
    comm_ms: float
    comm_fraction: float
    bytes_sent: int
    phase_bytes: dict
    rows_scanned_per_node: list

    def as_csv_row(self):
        return [
            self.query, self.variant, self.P, self.sf,
            f"{self.walltime_ms:.3f}", f"{self.comm_ms:.3f}",
            f"{self.comm_fraction:.4f}", self.bytes_sent,
            ";".join(f"{k}={v}" for k, v in sorted(self.phase_bytes.items())),
            ";".join(str(n) for n in self.rows_scanned_per_node),
        ]


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            w.writerow(r.as_csv_row())
        return buf.getvalue()


def estimate_memory_bytes(sf: Fraction, P: int) -> int:
    """Rough in-process footprint of generating the database on P threads."""
    return int(Fraction(3, 2) * 10 ** 9 * sf) + P * (2 << 20)


def _check_budget(sf: Fraction, P: int, budget: int) -> None:
    est = estimate_memory_bytes(sf, P)
    if est > budget:
        raise MemoryError(
            f"refusing sf={sf} P={P}: estimated {est / 2**20:.0f} MiB "
            f"exceeds the {budget / 2**20:.0f} MiB budget"
        )


def _build_nodes(sf: Fraction, P: int, seed: int):
    return [build_database(sf, P, r, seed) for r in range(P)]


def _timed_run(dbs, qid, params, variant, P):
    def fn(ctx):
        cl.barrier(ctx)  # synchronize before timing
        ctx.stats.comm_seconds = 0.0
        t0 = time.perf_counter()
        res = run_query(ctx, dbs[ctx.node_id], qid, params, variant)
        return res, time.perf_counter() - t0, ctx.stats

    out = cl.run_cluster(P, fn)
    result = out[0][0]
    walltime = max(dt for _, dt, _ in out)
    stats = [s for _, _, s in out]
    comm = sum(s.comm_seconds for s in stats) / P
    phase = {}
    for s in stats:
        for k, v in s.phase_bytes.items():
            phase[k] = phase.get(k, 0) + v
    row = BenchRow(
        query=qid, variant=variant or variants_for(qid)[0], P=P, sf="",
        walltime_ms=walltime * 1e3, comm_ms=comm * 1e3,
        comm_fraction=min(comm / walltime, 1.0) if walltime else 0.0,
        bytes_sent=sum(s.bytes_sent for s in stats),
        phase_bytes=phase,
        rows_scanned_per_node=[s.rows_scanned for s in stats],
    )
    return result, row, stats


def run_single(qid, variant, P, sf, params=None, seed=None,
               budget=DEFAULT_MEMORY_BUDGET):
    """One measured execution; returns (QueryResult, BenchRow)."""
    sf = sf if isinstance(sf, Fraction) else Fraction(str(sf))
    seed = env_seed() if seed is None else seed
    if qid not in QUERY_IDS:
        raise ValueError(f"unknown query {qid}")
    _check_budget(sf, P, budget)
    dbs = _build_nodes(sf, P, seed)
    result, row, _ = _timed_run(dbs, qid, params, variant, P)
    row.sf = str(sf)
    return result, row


def run_weak_scaling(qid, variant, base_sf, P_list, repeats=1, seed=None,
                     budget=DEFAULT_MEMORY_BUDGET) -> BenchReport:
    """Grow data with node count (sf = base_sf * P); median walltime over
    ``repeats``, exact byte counts (identical across repeats)."""
    base_sf = base_sf if isinstance(base_sf, Fraction) else Fraction(str(base_sf))
    seed = env_seed() if seed is None else seed
    report = BenchReport()
    for P in P_list:
        sf = base_sf * P
        _check_budget(sf, P, budget)
        dbs = _build_nodes(sf, P, seed)
        runs = [_timed_run(dbs, qid, None, variant, P) for _ in range(repeats)]
        times = sorted(r[1].walltime_ms for r in runs)
        row = runs[0][1]
        row.sf = str(sf)
        row.walltime_ms = times[len(times) // 2]
        report.rows.append(row)
    return report


def verify_all(sf, P_list, seed=None, out=sys.stdout,
               budget=DEFAULT_MEMORY_BUDGET) -> bool:
    """Compare every query x variant x P against the single-node oracle and
    re-assert the row-count limits; prints one line per check."""
    sf = sf if isinstance(sf, Fraction) else Fraction(str(sf))
    seed = env_seed() if seed is None else seed
    if not P_list:
        print("warning: empty node list, nothing verified", file=out)
        return True
    oracle_db = build_database(sf, 1, 0, seed)
    ok = True
    for P in P_list:
        _check_budget(sf, P, budget)
        dbs = _build_nodes(sf, P, seed)
        for qid in QUERY_IDS:
            expect = oracle_run(oracle_db, qid)
            for variant in variants_for(qid):
                got, _, _ = _timed_run(dbs, qid, None, variant, P)
                label = f"q{qid}/{variant} P={P}"
                if got != expect:
                    ok = False
                    print(f"FAIL {label}: {got.diff(expect)}", file=out)
                    continue
                limit = ROW_LIMITS.get(qid)
                if limit is not None and not (
                    len(got.rows) == 1 if qid == 14 else len(got.rows) <= limit
                ):
                    ok = False
                    print(f"FAIL {label}: {len(got.rows)} rows "
                          f"(limit {limit})", file=out)
                    continue
                print(f"PASS {label}", file=out)
    return ok


# ---------------------------------------------------------------------------
# CLI

def _parse_params(text: str) -> dict:
    out = {}
    for pair in text.split(","):
        if not pair:
            continue
        k, _, v = pair.partition("=")
        if v.count("-") == 2:
            out[k] = datetime.date.fromisoformat(v)
        elif v.lstrip("-").isdigit():
            out[k] = int(v)
        elif "/" in v:
            out[k] = Fraction(v)
        else:
            out[k] = v
    return out


def _nodes_list(text: str) -> list:
    return [int(p) for p in text.split(",") if p]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="bench",
        description="Distributed TPC-H query benchmark harness.",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    p_run = sub.add_parser("run", help="run one query once")
    p_run.add_argument("--query", type=int, required=True)
    p_run.add_argument("--variant", default=None)
    p_run.add_argument("--nodes", type=int, default=1)
    p_run.add_argument("--sf", default="0.01")
    p_run.add_argument("--params", default="")
    p_run.add_argument("--out", default=None, help="report CSV path")

    p_weak = sub.add_parser("weak", help="weak-scaling sweep")
    p_weak.add_argument("--query", type=int, required=True)
    p_weak.add_argument("--variant", default=None)
    p_weak.add_argument("--base-sf", default="0.005")
    p_weak.add_argument("--nodes", default="1,2,4,8")
    p_weak.add_argument("--repeats", type=int, default=1)
    p_weak.add_argument("--out", default=None)

    p_ver = sub.add_parser("verify", help="verify all queries against oracle")
    p_ver.add_argument("--sf", default="0.01")
    p_ver.add_argument("--nodes", default="1,2,4,8")

    args = ap.parse_args(argv)
    try:
        if args.cmd == "run":
            params = _parse_params(args.params) or None
            result, row = run_single(
                args.query, args.variant, args.nodes, args.sf, params)
            print(result.to_csv(), end="")
            report = BenchReport(rows=[row])
            if args.out:
                with open(args.out, "w") as f:
                    f.write(report.to_csv())
            else:
                print(report.to_csv(), end="")
            return 0
        if args.cmd == "weak":
            report = run_weak_scaling(
                args.query, args.variant, args.base_sf,
                _nodes_list(args.nodes), args.repeats)
            if args.out:
                with open(args.out, "w") as f:
                    f.write(report.to_csv())
            else:
                print(report.to_csv(), end="")
            return 0
        ok = verify_all(args.sf, _nodes_list(args.nodes))
        return 0 if ok else 1
    except MemoryError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
