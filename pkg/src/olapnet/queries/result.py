"""Typed query results with exact fixed-point values and CSV rendering.

Money and derived aggregates stay integers (with a decimal scale);
averages and ratios are exact rationals.  Everything renders to two
decimal places with round-half-up, so results compare bit-exactly.
"""

from __future__ import annotations

import csv
import datetime
import io
from dataclasses import dataclass, field


def _halfup_hundredths(num: int, den: int) -> int:
    """round(num/den * 100) with ties away from zero, exact integers."""
    if den == 0:
        return 0
    if den < 0:
        num, den = -num, -den
    num *= 100
    if num >= 0:
        return (2 * num + den) // (2 * den)
    return -((-2 * num + den) // (2 * den))


@dataclass(frozen=True)
class Fixed:
    """An exact decimal: units / 10^scale."""

    units: int
    scale: int = 2

    def render(self) -> str:
        n = _halfup_hundredths(self.units, 10 ** self.scale)
        sign = "-" if n < 0 else ""
        n = abs(n)
        return f"{sign}{n // 100}.{n % 100:02d}"

    def __add__(self, other: "Fixed") -> "Fixed":
        if other.scale != self.scale:
            raise ValueError("scale mismatch")
        return Fixed(self.units + other.units, self.scale)


@dataclass(frozen=True)
class Rat:
    """An exact rational num / (den * 10^scale); den = 0 renders as 0.00."""

    num: int
    den: int
    scale: int = 0

    def render(self) -> str:
        n = _halfup_hundredths(self.num, self.den * 10 ** self.scale)
        sign = "-" if n < 0 else ""
        n = abs(n)
        return f"{sign}{n // 100}.{n % 100:02d}"


def render_cell(v) -> str:
    if isinstance(v, (Fixed, Rat)):
        return v.render()
    if isinstance(v, datetime.date):
        return v.isoformat()
    if isinstance(v, bool):
        raise TypeError("boolean result cells are not supported")
    if isinstance(v, (int,)):
        return str(v)
    if isinstance(v, str):
        return v
    raise TypeError(f"unsupported result cell type {type(v)!r}")


@dataclass
class QueryResult:
    columns: list
    rows: list = field(default_factory=list)

    def rendered_rows(self) -> list:
        return [tuple(render_cell(v) for v in row) for row in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        w.writerow(self.columns)
        for row in self.rendered_rows():
            w.writerow(row)
        return buf.getvalue()

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, QueryResult)
            and self.columns == other.columns
            and self.rendered_rows() == other.rendered_rows()
        )

    def diff(self, other: "QueryResult") -> str:
        """Minimal human-readable difference against another result."""
        if self.columns != other.columns:
            return f"columns differ: {self.columns} vs {other.columns}"
        a, b = self.rendered_rows(), other.rendered_rows()
        if len(a) != len(b):
            return f"row counts differ: {len(a)} vs {len(b)}"
        for i, (ra, rb) in enumerate(zip(a, b)):
            if ra != rb:
                return f"row {i} differs: {ra} vs {rb}"
        return "equal"
