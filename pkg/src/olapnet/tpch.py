"""Deterministic TPC-H style data generation and .tbl file ingestion.

Columns are derived from counter-based pseudo-random streams keyed by
(seed, tag, global row), so any chunk of any table can be generated
independently on any node and chunking is consistent: the concatenation of
the P chunks equals the single-node table, column by column.

Row counts per scale factor follow the benchmark's schema; NATION and
REGION are replicated on every node.  Primary keys are dense (key = global
row + 1), which co-partitions lineitem with orders and partsupp with part.
"""

from __future__ import annotations

import datetime
import os
import zlib
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ParseError
from .storage import Column, ColumnTable, PartitionInfo, range_partition

DEFAULT_SEED = 0x5EED_0D15

_EPOCH = datetime.date(1970, 1, 1).toordinal()


def days(y: int, m: int, d: int) -> int:
    return datetime.date(y, m, d).toordinal() - _EPOCH


def render_date(v: int) -> str:
    return datetime.date.fromordinal(v + _EPOCH).isoformat()


def parse_date(s: str) -> int:
    return datetime.date.fromisoformat(s).toordinal() - _EPOCH


DATE_LO = days(1992, 1, 1)
DATE_HI = days(1998, 8, 2)
_CUTOFF = days(1995, 6, 17)

REGIONS = ["AFRICA", "AMERICA", "ASIA", "EUROPE", "MIDDLE EAST"]
# (name, region key), in nation-key order
NATIONS = [
    ("ALGERIA", 0), ("ARGENTINA", 1), ("BRAZIL", 1), ("CANADA", 1),
    ("EGYPT", 4), ("ETHIOPIA", 0), ("FRANCE", 3), ("GERMANY", 3),
    ("INDIA", 2), ("INDONESIA", 2), ("IRAN", 4), ("IRAQ", 4),
    ("JAPAN", 2), ("JORDAN", 4), ("KENYA", 0), ("MOROCCO", 0),
    ("MOZAMBIQUE", 0), ("PERU", 1), ("CHINA", 2), ("ROMANIA", 3),
    ("SAUDI ARABIA", 4), ("VIETNAM", 2), ("RUSSIA", 3),
    ("UNITED KINGDOM", 3), ("UNITED STATES", 1),
]
NATION_NAMES = [n for n, _ in NATIONS]

SEGMENTS = ["AUTOMOBILE", "BUILDING", "FURNITURE", "HOUSEHOLD", "MACHINERY"]
PRIORITIES = ["1-URGENT", "2-HIGH", "3-MEDIUM", "4-NOT SPECIFIED", "5-LOW"]
ORDER_STATUS = ["F", "O", "P"]
RETURN_FLAGS = ["A", "N", "R"]
LINE_STATUS = ["F", "O"]
MFGRS = [f"Manufacturer#{i}" for i in range(1, 6)]
_TYPE_1 = ["STANDARD", "SMALL", "MEDIUM", "LARGE", "ECONOMY", "PROMO"]
_TYPE_2 = ["ANODIZED", "BURNISHED", "PLATED", "POLISHED", "BRUSHED"]
_TYPE_3 = ["TIN", "NICKEL", "BRASS", "STEEL", "COPPER"]
TYPES = [f"{a} {b} {c}" for a in _TYPE_1 for b in _TYPE_2 for c in _TYPE_3]

TABLES = (
    "region", "nation", "supplier", "customer",
    "part", "partsupp", "orders", "lineitem",
)

_BASE_ROWS = {
    "supplier": 10_000,
    "customer": 150_000,
    "part": 200_000,
    "partsupp": 800_000,
    "orders": 1_500_000,
}


@dataclass(frozen=True)
class GenConfig:
    sf: Fraction
    P: int
    rank: int
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.sf <= 0:
            raise ValueError("sf must be positive")
        if not 0 <= self.rank < self.P:
            raise ValueError("rank must be in [0, P)")
        if scaled_rows("supplier", self.sf) < 4:
            raise ValueError("sf too small: fewer than 4 suppliers")


def as_sf(sf) -> Fraction:
    return sf if isinstance(sf, Fraction) else Fraction(str(sf))


def scaled_rows(table: str, sf: Fraction) -> int:
    """Global row count of a fixed-cardinality table (not lineitem)."""
    if table == "nation":
        return 25
    if table == "region":
        return 5
    return int(_BASE_ROWS[table] * as_sf(sf))


# ---------------------------------------------------------------------------
# counter-based streams (splitmix64)

def _tag_const(tag: str) -> np.uint64:
    return np.uint64(zlib.crc32(tag.encode()) * 0x9E3779B97F4A7C15 % (1 << 64))


def _stream(seed: int, tag: str, idx: np.ndarray) -> np.ndarray:
    x = idx.astype(np.uint64) + np.uint64(seed & (1 << 64) - 1) + _tag_const(tag)
    x = (x + np.uint64(0x9E3779B97F4A7C15))
    z = x
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _uni(seed: int, tag: str, idx: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Uniform int64 in [lo, hi]."""
    span = np.uint64(hi - lo + 1)
    return (lo + (_stream(seed, tag, idx) % span)).astype(np.int64)


# ---------------------------------------------------------------------------
# per-table generators

def _partition(table: str, total: int, cfg: GenConfig, replicated=False,
               layout=None):
    layout = layout or range_partition(total, cfg.P)
    first, count = (0, total) if replicated else layout[cfg.rank]
    return PartitionInfo(
        total_rows=total, node_id=cfg.rank, P=cfg.P,
        first_global_row=first, replicated=replicated,
        layout=None if replicated else layout,
    ), first, count


def _gen_region(cfg: GenConfig) -> ColumnTable:
    part, _, _ = _partition("region", 5, cfg, replicated=True)
    return ColumnTable(
        name="region",
        columns={"r_name": Column("dict", np.arange(5), dictionary=REGIONS)},
        row_count=5, partition=part, key_base=0,
    )


def _gen_nation(cfg: GenConfig) -> ColumnTable:
    part, _, _ = _partition("nation", 25, cfg, replicated=True)
    return ColumnTable(
        name="nation",
        columns={
            "n_name": Column("dict", np.arange(25), dictionary=NATION_NAMES),
            "n_regionkey": Column("int64", np.array([r for _, r in NATIONS])),
        },
        row_count=25, partition=part, key_base=0,
    )


def supplier_nation_codes(rows: np.ndarray) -> np.ndarray:
    """Nation of supplier at global row r: a fixed permutation cycle so even
    tiny scale factors cover many nations."""
    return ((rows % 25) * 11 + 7) % 25


def _gen_supplier(cfg: GenConfig) -> ColumnTable:
    total = scaled_rows("supplier", cfg.sf)
    part, first, count = _partition("supplier", total, cfg)
    g = np.arange(first, first + count, dtype=np.int64)
    keys = g + 1
    return ColumnTable(
        name="supplier",
        columns={
            "s_name": Column("text", [f"Supplier#{k:09d}" for k in keys]),
            "s_address": Column("text", [f"sAddr {k * 17 % 10007}" for k in keys]),
            "s_phone": Column(
                "text",
                [f"{10 + int(n)}-{k * 37 % 900 + 100}-{k * 53 % 9000 + 1000}"
                 for k, n in zip(keys, supplier_nation_codes(g))],
            ),
            "s_nationkey": Column("int64", supplier_nation_codes(g)),
            "s_acctbal": Column("money", _uni(cfg.seed, "s_acct", g, 0, 999_999)),
        },
        row_count=count, partition=part,
    )


def customer_segment_codes(seed: int, rows: np.ndarray) -> np.ndarray:
    return _uni(seed, "c_seg", rows, 0, len(SEGMENTS) - 1)


def _gen_customer(cfg: GenConfig) -> ColumnTable:
    total = scaled_rows("customer", cfg.sf)
    part, first, count = _partition("customer", total, cfg)
    g = np.arange(first, first + count, dtype=np.int64)
    keys = g + 1
    return ColumnTable(
        name="customer",
        columns={
            "c_name": Column("text", [f"Customer#{k:09d}" for k in keys]),
            "c_nationkey": Column("int64", _uni(cfg.seed, "c_nat", g, 0, 24)),
            "c_mktsegment": Column(
                "dict", customer_segment_codes(cfg.seed, g), dictionary=SEGMENTS
            ),
        },
        row_count=count, partition=part,
    )


def _gen_part(cfg: GenConfig) -> ColumnTable:
    total = scaled_rows("part", cfg.sf)
    part, first, count = _partition("part", total, cfg)
    g = np.arange(first, first + count, dtype=np.int64)
    return ColumnTable(
        name="part",
        columns={
            "p_mfgr": Column("dict", _uni(cfg.seed, "p_mfgr", g, 0, 4),
                             dictionary=MFGRS),
            "p_type": Column("dict", _uni(cfg.seed, "p_type", g, 0, 149),
                             dictionary=TYPES),
            "p_size": Column("int64", _uni(cfg.seed, "p_size", g, 1, 50)),
        },
        row_count=count, partition=part,
    )


def _gen_partsupp(cfg: GenConfig) -> ColumnTable:
    npart = scaled_rows("part", cfg.sf)
    nsupp = scaled_rows("supplier", cfg.sf)
    total = npart * 4
    # co-partitioned with part: 4 consecutive rows per part
    part_layout = range_partition(npart, cfg.P)
    layout = [(f * 4, c * 4) for f, c in part_layout]
    part, first, count = _partition("partsupp", total, cfg, layout=layout)
    g = np.arange(first, first + count, dtype=np.int64)
    pkey = g // 4 + 1
    i = g % 4
    skey = (pkey + i * (nsupp // 4 + (pkey - 1) // nsupp)) % nsupp + 1
    return ColumnTable(
        name="partsupp",
        columns={
            "ps_partkey": Column("int64", pkey),
            "ps_suppkey": Column("int64", skey),
            "ps_availqty": Column("int64", _uni(cfg.seed, "ps_qty", g, 1, 9_999)),
            "ps_supplycost": Column("money",
                                    _uni(cfg.seed, "ps_cost", g, 100, 100_000)),
        },
        row_count=count, partition=part, key_base=1,
    )


# --- orders / lineitem ------------------------------------------------------

_COMMENT_PATTERNS = [
    "the special packages wake quickly among the requests",
    "special pending requests sleep furiously",
    "carefully special deposits boost requests",
]


def _order_dates(seed: int, g: np.ndarray) -> np.ndarray:
    return _uni(seed, "o_date", g, DATE_LO, DATE_HI - 151)


def _order_custkeys(seed: int, g: np.ndarray, ncust: int) -> np.ndarray:
    # only customers whose key is not a multiple of three place orders
    ncand = ncust - ncust // 3
    j = _uni(seed, "o_cust", g, 0, ncand - 1)
    return (j // 2) * 3 + j % 2 + 1


def _lineitem_counts(seed: int, g: np.ndarray) -> np.ndarray:
    return _uni(seed, "li_n", g, 1, 7)


def _lineitem_fields(seed: int, order_rows: np.ndarray, j: np.ndarray,
                     odate: np.ndarray, npart: int, nsupp: int) -> dict:
    """Per-line columns for line j of each given order; keyed so that the
    orders generator can recompute its own lines without materializing the
    lineitem table."""
    key = order_rows * 8 + j
    qty = _uni(seed, "li_qty", key, 1, 50)
    unit = _uni(seed, "li_unit", key, 90_000, 110_000)
    ship = odate + _uni(seed, "li_ship", key, 1, 121)
    commit = odate + _uni(seed, "li_comm", key, 30, 90)
    receipt = ship + _uni(seed, "li_rcpt", key, 1, 30)
    # returnflag: R/A when received before the cutoff, N otherwise
    ra = np.where(_uni(seed, "li_rf", key, 0, 1) == 0, 0, 2)  # A or R
    rflag = np.where(receipt <= _CUTOFF, ra, 1)  # else N
    lstatus = np.where(ship <= _CUTOFF, 0, 1)  # F else O
    return {
        "l_partkey": _uni(seed, "li_part", key, 1, npart),
        "l_suppkey": _uni(seed, "li_supp", key, 1, nsupp),
        "l_quantity": qty,
        "l_extendedprice": qty * unit,
        "l_discount": _uni(seed, "li_disc", key, 0, 10),
        "l_tax": _uni(seed, "li_tax", key, 0, 8),
        "l_returnflag": rflag.astype(np.int64),
        "l_linestatus": lstatus.astype(np.int64),
        "l_shipdate": ship,
        "l_commitdate": commit,
        "l_receiptdate": receipt,
    }


def _gen_orders(cfg: GenConfig) -> ColumnTable:
    total = scaled_rows("orders", cfg.sf)
    npart = scaled_rows("part", cfg.sf)
    nsupp = scaled_rows("supplier", cfg.sf)
    ncust = scaled_rows("customer", cfg.sf)
    part, first, count = _partition("orders", total, cfg)
    g = np.arange(first, first + count, dtype=np.int64)
    odate = _order_dates(cfg.seed, g)
    counts = _lineitem_counts(cfg.seed, g)

    totalprice = np.zeros(count, dtype=np.int64)
    all_f = np.ones(count, dtype=bool)
    all_o = np.ones(count, dtype=bool)
    for j in range(7):
        m = counts > j
        if not m.any():
            break
        f = _lineitem_fields(cfg.seed, g[m], np.full(m.sum(), j), odate[m],
                             npart, nsupp)
        totalprice[m] += f["l_extendedprice"]
        all_f[m] &= f["l_linestatus"] == 0
        all_o[m] &= f["l_linestatus"] == 1
    status = np.where(all_f, 0, np.where(all_o, 1, 2))

    cv = _uni(cfg.seed, "o_cmnt", g, 0, 999)
    comments = [
        _COMMENT_PATTERNS[v % len(_COMMENT_PATTERNS)] if v < 12
        else f"quiet ideas haggle blithely {v}"
        for v in cv.tolist()
    ]
    return ColumnTable(
        name="orders",
        columns={
            "o_custkey": Column("int64", _order_custkeys(cfg.seed, g, ncust)),
            "o_orderstatus": Column("dict", status, dictionary=ORDER_STATUS),
            "o_totalprice": Column("money", totalprice),
            "o_orderdate": Column("date", odate),
            "o_orderpriority": Column("dict",
                                      _uni(cfg.seed, "o_prio", g, 0, 4),
                                      dictionary=PRIORITIES),
            "o_comment": Column("text", comments),
        },
        row_count=count, partition=part,
    )


def lineitem_layout(sf: Fraction, P: int, seed: int) -> list[tuple[int, int]]:
    """Lineitem partition derived from the orders partition: each node holds
    exactly the lineitems of its own orders."""
    total_orders = scaled_rows("orders", sf)
    counts = _lineitem_counts(seed, np.arange(total_orders, dtype=np.int64))
    offsets = np.concatenate([[0], np.cumsum(counts)])
    return [
        (int(offsets[f]), int(offsets[f + c] - offsets[f]))
        for f, c in range_partition(total_orders, P)
    ]


def _gen_lineitem(cfg: GenConfig) -> ColumnTable:
    sf, seed = cfg.sf, cfg.seed
    npart = scaled_rows("part", sf)
    nsupp = scaled_rows("supplier", sf)
    total_orders = scaled_rows("orders", sf)
    olayout = range_partition(total_orders, cfg.P)
    llayout = lineitem_layout(sf, cfg.P, seed)
    of, oc = olayout[cfg.rank]
    first, count = llayout[cfg.rank]
    total = llayout[-1][0] + llayout[-1][1]

    g_orders = np.arange(of, of + oc, dtype=np.int64)
    counts = _lineitem_counts(seed, g_orders)
    order_per_line = np.repeat(g_orders, counts)
    ends = np.cumsum(counts)
    j = np.arange(int(counts.sum()), dtype=np.int64) - np.repeat(ends - counts, counts)
    odate = np.repeat(_order_dates(seed, g_orders), counts)
    f = _lineitem_fields(seed, order_per_line, j, odate, npart, nsupp)

    part = PartitionInfo(
        total_rows=total, node_id=cfg.rank, P=cfg.P,
        first_global_row=first, layout=llayout,
    )
    cols = {"l_orderkey": Column("int64", order_per_line + 1)}
    for name, vals in f.items():
        if name in ("l_returnflag", "l_linestatus"):
            dic = RETURN_FLAGS if name == "l_returnflag" else LINE_STATUS
            cols[name] = Column("dict", vals, dictionary=dic)
        elif name == "l_extendedprice":
            cols[name] = Column("money", vals)
        elif name.endswith("date"):
            cols[name] = Column("date", vals)
        else:
            cols[name] = Column("int64", vals)
    return ColumnTable(name="lineitem", columns=cols, row_count=count,
                       partition=part)


_GENERATORS = {
    "region": _gen_region,
    "nation": _gen_nation,
    "supplier": _gen_supplier,
    "customer": _gen_customer,
    "part": _gen_part,
    "partsupp": _gen_partsupp,
    "orders": _gen_orders,
    "lineitem": _gen_lineitem,
}


def generate_chunk(cfg: GenConfig, table: str) -> ColumnTable:
    """Generate this node's partition of one table."""
    if table not in _GENERATORS:
        raise ValueError(f"unknown table {table!r}")
    t = _GENERATORS[table](cfg)
    t.validate()
    return t


# ---------------------------------------------------------------------------
# database handle

@dataclass
class Database:
    sf: Fraction
    P: int
    rank: int
    seed: int
    tables: dict[str, ColumnTable]
    layouts: dict[str, list[tuple[int, int]]]
    # join attributes replicated on every node (see the Q3/Q5/Q21 plans)
    repl_supplier_nation: np.ndarray = field(repr=False, default=None)
    repl_customer_segment: np.ndarray = field(repr=False, default=None)

    def table(self, name: str) -> ColumnTable:
        return self.tables[name]


def build_database(sf, P: int, rank: int, seed: int = DEFAULT_SEED) -> Database:
    sf = as_sf(sf)
    cfg = GenConfig(sf=sf, P=P, rank=rank, seed=seed)
    tables = {t: generate_chunk(cfg, t) for t in TABLES}
    layouts = {
        t: tables[t].partition.layout
        if not tables[t].partition.replicated
        else [(0, tables[t].row_count)]
        for t in TABLES
    }
    nsupp = scaled_rows("supplier", sf)
    ncust = scaled_rows("customer", sf)
    return Database(
        sf=sf, P=P, rank=rank, seed=seed, tables=tables, layouts=layouts,
        repl_supplier_nation=supplier_nation_codes(
            np.arange(nsupp, dtype=np.int64)),
        repl_customer_segment=customer_segment_codes(
            seed, np.arange(ncust, dtype=np.int64)),
    )


def env_seed() -> int:
    v = os.environ.get("OLAPNET_SEED")
    return int(v) if v else DEFAULT_SEED


# ---------------------------------------------------------------------------
# .tbl ingestion (official dbgen format: pipe separated, trailing pipe)

def _p_int(s):
    return int(s)


def _p_money(s):
    sign = -1 if s.startswith("-") else 1
    s = s.lstrip("-")
    if "." in s:
        whole, frac = s.split(".")
        if len(frac) != 2:
            raise ValueError(f"expected 2 decimal places: {s!r}")
    else:
        whole, frac = s, "00"
    return sign * (int(whole) * 100 + int(frac))


def _p_hundredths(s):
    return _p_money(s)  # same fixed-point rule, scale 2


def _p_dict(dictionary):
    index = {v: i for i, v in enumerate(dictionary)}

    def parse(s):
        if s not in index:
            raise ValueError(f"value {s!r} not in dictionary")
        return index[s]

    parse.dictionary = dictionary
    return parse


_p_text = str

# (official 0-based field index, our column name, kind, parser)
_TBL_SCHEMAS = {
    "region": [(1, "r_name", "dict", _p_dict(REGIONS))],
    "nation": [
        (1, "n_name", "dict", _p_dict(NATION_NAMES)),
        (2, "n_regionkey", "int64", _p_int),
    ],
    "supplier": [
        (1, "s_name", "text", _p_text),
        (2, "s_address", "text", _p_text),
        (3, "s_nationkey", "int64", _p_int),
        (4, "s_phone", "text", _p_text),
        (5, "s_acctbal", "money", _p_money),
    ],
    "customer": [
        (1, "c_name", "text", _p_text),
        (3, "c_nationkey", "int64", _p_int),
        (6, "c_mktsegment", "dict", _p_dict(SEGMENTS)),
    ],
    "part": [
        (2, "p_mfgr", "dict", _p_dict(MFGRS)),
        (4, "p_type", "dict", _p_dict(TYPES)),
        (5, "p_size", "int64", _p_int),
    ],
    "partsupp": [
        (0, "ps_partkey", "int64", _p_int),
        (1, "ps_suppkey", "int64", _p_int),
        (2, "ps_availqty", "int64", _p_int),
        (3, "ps_supplycost", "money", _p_money),
    ],
    "orders": [
        (1, "o_custkey", "int64", _p_int),
        (2, "o_orderstatus", "dict", _p_dict(ORDER_STATUS)),
        (3, "o_totalprice", "money", _p_money),
        (4, "o_orderdate", "date", parse_date),
        (5, "o_orderpriority", "dict", _p_dict(PRIORITIES)),
        (8, "o_comment", "text", _p_text),
    ],
    "lineitem": [
        (0, "l_orderkey", "int64", _p_int),
        (1, "l_partkey", "int64", _p_int),
        (2, "l_suppkey", "int64", _p_int),
        (4, "l_quantity", "int64", _p_int),
        (5, "l_extendedprice", "money", _p_money),
        (6, "l_discount", "int64", _p_hundredths),
        (7, "l_tax", "int64", _p_hundredths),
        (8, "l_returnflag", "dict", _p_dict(RETURN_FLAGS)),
        (9, "l_linestatus", "dict", _p_dict(LINE_STATUS)),
        (10, "l_shipdate", "date", parse_date),
        (11, "l_commitdate", "date", parse_date),
        (12, "l_receiptdate", "date", parse_date),
    ],
}

# field count of the official format, for serialization padding
_TBL_WIDTH = {
    "region": 3, "nation": 4, "supplier": 7, "customer": 8,
    "part": 9, "partsupp": 5, "orders": 9, "lineitem": 16,
}


def load_tbl(path, table: str, P: int = 1, rank: int = 0) -> ColumnTable:
    """Parse a dbgen-format file and keep this node's range partition."""
    if table not in _TBL_SCHEMAS:
        raise ValueError(f"unknown table {table!r}")
    schema = _TBL_SCHEMAS[table]
    raw_rows = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if not line.endswith("|"):
                raise ParseError("missing trailing pipe", line_no)
            fields = line[:-1].split("|")
            row = []
            for idx, name, _, parse in schema:
                if idx >= len(fields):
                    raise ParseError(f"too few fields for {name}", line_no)
                try:
                    row.append(parse(fields[idx]))
                except ValueError as e:
                    raise ParseError(f"column {name}: {e}", line_no) from e
            raw_rows.append(row)

    total = len(raw_rows)
    replicated = table in ("nation", "region")
    layout = range_partition(total, P)
    first, count = (0, total) if replicated else layout[rank]
    mine = raw_rows[first:first + count]
    columns = {}
    for c, (_, name, kind, parse) in enumerate(schema):
        vals = [r[c] for r in mine]
        dic = getattr(parse, "dictionary", None)
        columns[name] = Column(kind, vals, dictionary=dic)
    t = ColumnTable(
        name=table, columns=columns, row_count=count,
        partition=PartitionInfo(
            total_rows=total, node_id=rank, P=P, first_global_row=first,
            replicated=replicated, layout=None if replicated else layout,
        ),
        key_base=0 if replicated else 1,
    )
    t.validate()
    return t


def _render_field(col: Column, i: int) -> str:
    if col.kind in ("int64",):
        return str(int(col.values[i]))
    if col.kind == "money":
        v = int(col.values[i])
        sign = "-" if v < 0 else ""
        v = abs(v)
        return f"{sign}{v // 100}.{v % 100:02d}"
    if col.kind == "date":
        return render_date(int(col.values[i]))
    if col.kind == "dict":
        return col.dictionary[int(col.values[i])]
    return col.values[i]


def to_tbl_lines(t: ColumnTable) -> list[str]:
    """Serialize back to the official field layout; fields we do not store
    are left empty."""
    schema = _TBL_SCHEMAS[t.name]
    width = _TBL_WIDTH[t.name]
    key_idx = {"region": 0, "nation": 0, "supplier": 0, "customer": 0,
               "part": 0, "orders": 0}.get(t.name)
    out = []
    for i in range(t.row_count):
        fields = [""] * width
        if key_idx is not None:
            fields[key_idx] = str(t.partition.first_global_row + i + t.key_base)
        for idx, name, _, _ in schema:
            fields[idx] = _render_field(t.columns[name], i)
        if t.name == "lineitem":
            fields[3] = "1"  # linenumber, not stored
            # discount and tax are kept in hundredths; the text format
            # writes them as decimals
            for idx in (6, 7):
                v = int(fields[idx])
                fields[idx] = f"{v // 100}.{v % 100:02d}"
        out.append("|".join(fields) + "|")
    return out
