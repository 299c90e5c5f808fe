"""Shared helpers: cached database builds and a distributed-run harness."""

from fractions import Fraction
from functools import lru_cache

from olapnet.cluster import run_cluster
from olapnet.queries import oracle_run, run_query
from olapnet.tpch import DEFAULT_SEED, build_database


@lru_cache(maxsize=32)
def node_dbs(sf_str: str, P: int, seed: int = DEFAULT_SEED):
    return tuple(
        build_database(Fraction(sf_str), P, r, seed) for r in range(P)
    )


@lru_cache(maxsize=8)
def oracle_db(sf_str: str, seed: int = DEFAULT_SEED):
    return node_dbs(sf_str, 1, seed)[0]


def run_distributed(qid, sf_str, P, params=None, variant=None,
                    with_stats=False, seed=DEFAULT_SEED):
    """Run one query on a P-node cluster; returns the root's QueryResult
    (and per-node CommStats when asked)."""
    dbs = node_dbs(sf_str, P, seed)
    frozen = dict(params) if params else None

    def fn(ctx):
        res = run_query(ctx, dbs[ctx.node_id], qid, frozen, variant)
        return (res, ctx.stats) if with_stats else res

    out = run_cluster(P, fn)
    if with_stats:
        return out[0][0], [s for _, s in out]
    return out[0]


def oracle(qid, sf_str, params=None, seed=DEFAULT_SEED):
    return oracle_run(oracle_db(sf_str, seed), qid, params)
