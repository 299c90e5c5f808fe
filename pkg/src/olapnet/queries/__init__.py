"""Distributed TPC-H query plans, their single-node oracle, and typed results."""

from .oracle import oracle_run
from .plans import (
    QUERY_IDS,
    VARIANTS,
    default_params,
    run_query,
    variants_for,
)
from .result import Fixed, QueryResult, Rat

__all__ = [
    "QUERY_IDS",
    "VARIANTS",
    "Fixed",
    "QueryResult",
    "Rat",
    "default_params",
    "oracle_run",
    "run_query",
    "variants_for",
]
