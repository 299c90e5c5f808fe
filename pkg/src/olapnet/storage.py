"""Columnar, partitioned table storage with join indexes.

Each node holds one contiguous range of a table's global rows (tiny tables
are replicated instead).  Money is stored as integer cents; dates as days
since 1970-01-01; low-cardinality strings are dictionary encoded; free text
is kept as a plain Python list.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .errors import ReferentialIntegrityError

KINDS = ("int64", "money", "date", "dict", "text")


@dataclass
class Column:
    kind: str
    values: object  # np.ndarray for int kinds / dict codes, list[str] for text
    dictionary: list[str] | None = None
    scale: int = 2  # money only

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown column kind {self.kind!r}")
        if self.kind == "dict" and self.dictionary is None:
            raise ValueError("dict column requires a dictionary")
        if self.kind != "text":
            self.values = np.asarray(self.values, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.values)

    def decoded(self, i: int):
        """Value of row i in user-facing form."""
        if self.kind == "dict":
            return self.dictionary[int(self.values[i])]
        if self.kind == "text":
            return self.values[i]
        return int(self.values[i])


@dataclass
class PartitionInfo:
    total_rows: int
    node_id: int
    P: int
    first_global_row: int
    replicated: bool = False
    # (first_global_row, row_count) of every node, for owner lookups.
    layout: list[tuple[int, int]] | None = None


@dataclass
class ColumnTable:
    name: str
    columns: dict[str, Column]
    row_count: int
    partition: PartitionInfo
    key_base: int = 1  # dense primary key of global row r is r + key_base

    def col(self, name: str) -> np.ndarray:
        return self.columns[name].values

    def dict_col(self, name: str) -> tuple[np.ndarray, list[str]]:
        c = self.columns[name]
        return c.values, c.dictionary

    def validate(self) -> None:
        for cname, c in self.columns.items():
            if len(c) != self.row_count:
                raise ValueError(
                    f"{self.name}.{cname}: {len(c)} values for "
                    f"{self.row_count} rows"
                )
            if c.kind == "dict" and len(c) and (
                c.values.min() < 0 or c.values.max() >= len(c.dictionary)
            ):
                raise ValueError(f"{self.name}.{cname}: dictionary index out of range")

    def global_rows(self) -> np.ndarray:
        first = self.partition.first_global_row
        return np.arange(first, first + self.row_count, dtype=np.int64)


@dataclass
class JoinIndex:
    parent_table: str
    child_table: str
    child_to_parent: np.ndarray  # global parent row per local child row
    parent_locality: str  # "local" | "remote"


def range_partition(total_rows: int, P: int) -> list[tuple[int, int]]:
    """Split [0, total_rows) into P contiguous ranges whose sizes differ by
    at most one; larger ranges go to lower node ids."""
    if P < 1:
        raise ValueError("P must be >= 1")
    if total_rows < 0:
        raise ValueError("total_rows must be >= 0")
    base, rem = divmod(total_rows, P)
    out = []
    first = 0
    for node in range(P):
        count = base + (1 if node < rem else 0)
        out.append((first, count))
        first += count
    return out


def global_to_owner(global_row: int, layout: list[tuple[int, int]]) -> int:
    """Node whose range contains ``global_row``."""
    total = layout[-1][0] + layout[-1][1]
    if not 0 <= global_row < total:
        raise ValueError(f"global row {global_row} out of range [0,{total})")
    firsts = [f for f, _ in layout]
    node = bisect_right(firsts, global_row) - 1
    # Skip over empty trailing ranges that share a first row.
    while layout[node][1] == 0:
        node -= 1
    return node


def owners_of(global_rows: np.ndarray, layout: list[tuple[int, int]]) -> np.ndarray:
    """Vectorized global_to_owner."""
    total = layout[-1][0] + layout[-1][1]
    rows = np.asarray(global_rows, dtype=np.int64)
    if rows.size and (rows.min() < 0 or rows.max() >= total):
        raise ValueError("global row out of range")
    # Right-bound search over non-empty range starts.
    starts = np.array([f for f, c in layout], dtype=np.int64)
    counts = np.array([c for f, c in layout], dtype=np.int64)
    node = np.searchsorted(starts, rows, side="right") - 1
    while (counts[node] == 0).any():
        node = np.where(counts[node] == 0, node - 1, node)
    return node


def build_join_index(
    child: ColumnTable,
    fk_column: str,
    parent: PartitionInfo,
    parent_key_base: int = 1,
) -> JoinIndex:
    """Map each local child row to the global parent row named by its
    foreign key column."""
    fk = child.col(fk_column)
    target = fk - parent_key_base
    if target.size and (target.min() < 0 or target.max() >= parent.total_rows):
        bad = int(fk[(target < 0) | (target >= parent.total_rows)][0])
        raise ReferentialIntegrityError(
            f"{child.name}.{fk_column}={bad} does not resolve to a parent row"
        )
    if parent.replicated:
        local = True
    else:
        if parent.layout is None:
            raise ValueError("parent partition needs a layout for locality check")
        lo = parent.first_global_row
        hi = lo + parent.layout[parent.node_id][1]
        local = bool(
            target.size == 0 or ((target >= lo) & (target < hi)).all()
        )
    return JoinIndex(
        parent_table="",
        child_table=child.name,
        child_to_parent=target,
        parent_locality="local" if local else "remote",
    )
