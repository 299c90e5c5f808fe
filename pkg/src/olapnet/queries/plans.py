"""Hand-compiled distributed plans for the eleven implemented queries.

Each ``run_qN(ctx, db, params, variant)`` executes one node's part of the
plan and returns the full QueryResult at node 0 (None elsewhere).  All
money arithmetic is integer fixed-point: extended price is cents (scale
2), revenue = extendedprice * (100 - discount) is scale 4, charge adds a
(100 + tax) factor for scale 6.
"""

from __future__ import annotations

import datetime
import pickle
from fractions import Fraction

import numpy as np

from .. import cluster as cl
from .. import tpch
from ..codec import Bitset, VarIntBlock, delta_varint_decode, delta_varint_encode
from ..distops import (
    Aggregation,
    TopKList,
    approx_topk_sum,
    global_topk,
    group_keys_by_owner,
    late_materialize,
    lazy_topk_filter,
    naive_topk_sum,
    remote_filter_replicate,
    remote_filter_request,
)
from ..errors import ProtocolError
from .result import Fixed, QueryResult, Rat

ROOT = 0

QUERY_IDS = (1, 2, 3, 4, 5, 11, 13, 14, 15, 18, 21)

VARIANTS = {
    3: ("bitset", "lazy", "repl_attr"),
    15: ("naive", "naive_1factor", "approx"),
    21: ("bitset", "late", "repl_attr"),
}


def variants_for(qid: int):
    return VARIANTS.get(qid, ("default",))


def default_params(qid: int, sf: Fraction) -> dict:
    d = datetime.date
    return {
        1: {"delta_days": 90},
        2: {"size": 15, "type_suffix": "BRASS", "region": "EUROPE"},
        3: {"segment": "BUILDING", "date": d(1995, 3, 15)},
        4: {"date": d(1993, 7, 1)},
        5: {"region": "ASIA", "date": d(1994, 1, 1)},
        11: {"nation": "GERMANY", "fraction": Fraction(1, 10000) / sf},
        13: {"word1": "special", "word2": "requests"},
        14: {"date": d(1995, 9, 1)},
        15: {"date": d(1996, 1, 1)},
        18: {"quantity": 250},
        21: {"nation": "SAUDI ARABIA"},
    }[qid]


def to_days(d: datetime.date) -> int:
    return d.toordinal() - datetime.date(1970, 1, 1).toordinal()


def from_days(v: int) -> datetime.date:
    return datetime.date.fromordinal(int(v) + datetime.date(1970, 1, 1).toordinal())


def add_months(d: datetime.date, n: int) -> datetime.date:
    m = d.month - 1 + n
    return d.replace(year=d.year + m // 12, month=m % 12 + 1)


_NATION_REGION = np.array([r for _, r in tpch.NATIONS], dtype=np.int64)


# ---------------------------------------------------------------------------
# small distributed helpers

def _vec_sum_op() -> cl.ReduceOperator:
    def combine(a: bytes, b: bytes) -> bytes:
        va = np.frombuffer(a, dtype=np.int64)
        vb = np.frombuffer(b, dtype=np.int64)
        return (va + vb).tobytes()

    return cl.ReduceOperator(combine=combine)


def _reduce_vec(ctx, vec: np.ndarray):
    out = cl.reduce(ctx, np.ascontiguousarray(vec, dtype=np.int64).tobytes(),
                    _vec_sum_op(), ROOT)
    return np.frombuffer(out, dtype=np.int64) if ctx.node_id == ROOT else None


def _allreduce_vec(ctx, vec: np.ndarray) -> np.ndarray:
    out = cl.allreduce(ctx, np.ascontiguousarray(vec, dtype=np.int64).tobytes(),
                       _vec_sum_op())
    return np.frombuffer(out, dtype=np.int64)


def _dict_sum_op() -> cl.ReduceOperator:
    def combine(a: bytes, b: bytes) -> bytes:
        da, db_ = pickle.loads(a), pickle.loads(b)
        for k, v in db_.items():
            da[k] = da.get(k, 0) + v
        return pickle.dumps(da, protocol=4)

    return cl.ReduceOperator(combine=combine)


def fetch_remote_values(ctx, rows, local_values: np.ndarray, layout) -> np.ndarray:
    """Value counterpart of a remote filter request: ask each owner for the
    (non-negative) integer attribute of explicit global rows."""
    rows = np.asarray(rows, dtype=np.int64)
    per_owner, inverse = group_keys_by_owner(rows, layout)
    with ctx.phase("value_fetch"):
        requests = [delta_varint_encode(g).to_bytes() for g in per_owner]
        incoming = cl.all_to_all_1factor(ctx, requests)
        first, count = layout[ctx.node_id]
        replies = []
        for buf in incoming:
            block, _ = VarIntBlock.from_bytes(buf)
            keys = delta_varint_decode(block)
            if keys.size and (keys.min() < first or keys.max() >= first + count):
                ctx.transport.abort()
                raise ProtocolError("value fetch key outside owner range")
            replies.append(
                np.ascontiguousarray(local_values[keys - first], "<u8").tobytes()
            )
        answers = cl.all_to_all_1factor(ctx, replies)
    flat = np.concatenate(
        [np.frombuffer(a, dtype="<u8").astype(np.int64) for a in answers]
    )
    return flat[inverse]


def exchange_key_counts(ctx, keys: np.ndarray, counts: np.ndarray,
                        layout) -> np.ndarray:
    """Send (sorted unique key, count) pairs to the key owners; returns the
    dense count array over this node's own key range, summed over nodes."""
    per_owner, _ = group_keys_by_owner(keys, layout)
    # counts follow the same sorted-unique order as the key groups
    order = np.argsort(keys, kind="stable")
    sorted_counts = counts[order]
    payloads = []
    pos = 0
    for g in per_owner:
        c = sorted_counts[pos:pos + len(g)]
        pos += len(g)
        payloads.append(
            delta_varint_encode(g).to_bytes()
            + np.ascontiguousarray(c, "<u8").tobytes()
        )
    with ctx.phase("count_exchange"):
        incoming = cl.all_to_all_1factor(ctx, payloads)
    first, count = layout[ctx.node_id]
    dense = np.zeros(count, dtype=np.int64)
    for buf in incoming:
        block, p = VarIntBlock.from_bytes(buf)
        got = delta_varint_decode(block)
        if got.size and (got.min() < first or got.max() >= first + count):
            ctx.transport.abort()
            raise ProtocolError("count exchange key outside owner range")
        vals = np.frombuffer(buf[p:], dtype="<u8").astype(np.int64)
        np.add.at(dense, got - first, vals)
    return dense


def _check_variant(qid: int, variant: str) -> None:
    if variant not in variants_for(qid):
        raise ValueError(f"query {qid} has no variant {variant!r}")


def _local_order_rows(db, table="lineitem") -> np.ndarray:
    """Local orders-row index of each local lineitem (co-partitioned)."""
    li = db.table(table)
    return (li.col("l_orderkey") - 1) - db.table("orders").partition.first_global_row


def _revenue(li, mask=None) -> np.ndarray:
    ext = li.col("l_extendedprice")
    disc = li.col("l_discount")
    rev = ext * (100 - disc)
    return rev if mask is None else rev[mask]


# ---------------------------------------------------------------------------
# Q1: pricing summary report

def run_q1(ctx, db, params, variant="default"):
    _check_variant(1, variant)
    cutoff = to_days(datetime.date(1998, 12, 1)) - params["delta_days"]
    li = db.table("lineitem")
    ctx.stats.rows_scanned += li.row_count
    m = li.col("l_shipdate") <= cutoff
    rf = li.col("l_returnflag")[m]
    ls = li.col("l_linestatus")[m]
    g = rf * 2 + ls  # 3 flags x 2 statuses
    qty = li.col("l_quantity")[m]
    ext = li.col("l_extendedprice")[m]
    disc = li.col("l_discount")[m]
    disc_price = ext * (100 - disc)
    charge = disc_price * (100 + li.col("l_tax")[m])

    def acc(w):
        out = np.zeros(6, dtype=np.int64)
        np.add.at(out, g, w)
        return out

    stats = np.concatenate([
        acc(qty), acc(ext), acc(disc_price), acc(charge), acc(disc),
        np.bincount(g, minlength=6).astype(np.int64),
    ])
    total = _reduce_vec(ctx, stats)
    if ctx.node_id != ROOT:
        return None
    sum_qty, sum_ext, sum_dp, sum_ch, sum_disc, cnt = total.reshape(6, 6)
    rows = []
    for gi in range(6):
        n = int(cnt[gi])
        if n == 0:
            continue
        rows.append((
            tpch.RETURN_FLAGS[gi // 2],
            tpch.LINE_STATUS[gi % 2],
            int(sum_qty[gi]),
            Fixed(int(sum_ext[gi]), 2),
            Fixed(int(sum_dp[gi]), 4),
            Fixed(int(sum_ch[gi]), 6),
            Rat(int(sum_qty[gi]), n, 0),
            Rat(int(sum_ext[gi]), n, 2),
            Rat(int(sum_disc[gi]), n, 2),
            n,
        ))
    return QueryResult(
        columns=["l_returnflag", "l_linestatus", "sum_qty", "sum_base_price",
                 "sum_disc_price", "sum_charge", "avg_qty", "avg_price",
                 "avg_disc", "count_order"],
        rows=rows,
    )


# ---------------------------------------------------------------------------
# Q2: minimum cost supplier

def run_q2(ctx, db, params, variant="default"):
    _check_variant(2, variant)
    part = db.table("part")
    ps = db.table("partsupp")
    sup = db.table("supplier")
    sup_layout = db.layouts["supplier"]
    ctx.stats.rows_scanned += part.row_count + ps.row_count

    type_codes = np.array(
        [t.endswith(params["type_suffix"])
         for t in part.columns["p_type"].dictionary]
    )
    pmask = (part.col("p_size") == params["size"]) \
        & type_codes[part.col("p_type")]
    p_local = (ps.col("ps_partkey") - 1) - part.partition.first_global_row
    cand = np.flatnonzero(pmask[p_local])
    supp_rows = ps.col("ps_suppkey")[cand] - 1

    region_code = tpch.REGIONS.index(params["region"])
    s_nat = sup.col("s_nationkey")
    per_owner, inverse = group_keys_by_owner(supp_rows, sup_layout)
    bits = remote_filter_request(
        ctx, per_owner,
        lambda rows: _NATION_REGION[s_nat[rows]] == region_code,
        sup_layout,
    )
    ok = bits.bits[inverse] if cand.size else np.zeros(0, bool)
    cand, supp_rows = cand[ok], supp_rows[ok]

    # minimum supply cost per part over the surviving suppliers (the four
    # partsupp rows of a part are co-located, so this stays local)
    cost = ps.col("ps_supplycost")[cand]
    prow = p_local[cand]
    min_cost = {}
    for r, c in zip(prow.tolist(), cost.tolist()):
        if c < min_cost.get(r, 1 << 62):
            min_cost[r] = c
    keep = np.array(
        [c == min_cost[r] for r, c in zip(prow.tolist(), cost.tolist())],
        dtype=bool,
    ) if cand.size else np.zeros(0, bool)
    cand, supp_rows, prow = cand[keep], supp_rows[keep], prow[keep]

    acct = fetch_remote_values(ctx, supp_rows, sup.col("s_acctbal"), sup_layout)
    n_names = [tpch.NATION_NAMES[db.repl_supplier_nation[r]]
               for r in supp_rows.tolist()]
    part_first = part.partition.first_global_row
    items = [
        (int(a), (nn, int(sr) + 1, int(part_first + pr) + 1), None)
        for a, nn, sr, pr in zip(acct.tolist(), n_names,
                                 supp_rows.tolist(), prow.tolist())
    ]
    top = global_topk(ctx, TopKList.from_items(100, items), 100, ROOT)

    if ctx.node_id == ROOT:
        supp_keys = np.array([e[1][1] - 1 for e in top.entries], dtype=np.int64)
        part_keys = np.array([e[1][2] - 1 for e in top.entries], dtype=np.int64)
    else:
        supp_keys = part_keys = None
    s_cols = late_materialize(
        ctx, supp_keys,
        lambda rows: [(sup.columns["s_name"].values[i],
                       sup.columns["s_address"].values[i],
                       sup.columns["s_phone"].values[i]) for i in rows],
        sup_layout, ROOT,
    )
    mfgr_dict = part.columns["p_mfgr"].dictionary
    p_cols = late_materialize(
        ctx, part_keys,
        lambda rows: [mfgr_dict[c] for c in part.col("p_mfgr")[rows]],
        db.layouts["part"], ROOT,
    )
    if ctx.node_id != ROOT:
        return None
    rows = [
        (Fixed(e[0], 2), sc[0], e[1][0], e[1][2], pm, sc[1], sc[2])
        for e, sc, pm in zip(top.entries, s_cols, p_cols)
    ]
    return QueryResult(
        columns=["s_acctbal", "s_name", "n_name", "p_partkey", "p_mfgr",
                 "s_address", "s_phone"],
        rows=rows,
    )


# ---------------------------------------------------------------------------
# Q3: shipping priority

def run_q3(ctx, db, params, variant="bitset"):
    _check_variant(3, variant)
    dd = to_days(params["date"])
    seg = tpch.SEGMENTS.index(params["segment"])
    orders = db.table("orders")
    li = db.table("lineitem")
    cust = db.table("customer")
    cust_layout = db.layouts["customer"]
    ctx.stats.rows_scanned += orders.row_count + li.row_count

    lmask = li.col("l_shipdate") > dd
    orow = _local_order_rows(db)
    rev = np.zeros(orders.row_count, dtype=np.int64)
    np.add.at(rev, orow[lmask], _revenue(li, lmask))
    omask = (orders.col("o_orderdate") < dd) & (rev > 0)
    cand_rows = np.flatnonzero(omask)
    cust_rows = orders.col("o_custkey")[cand_rows] - 1
    odates = orders.col("o_orderdate")[cand_rows]
    okeys = orders.partition.first_global_row + cand_rows + 1

    def entry(i):
        return (int(rev[cand_rows[i]]),
                (int(odates[i]), int(okeys[i])), None)

    if variant == "lazy":
        candidates = sorted(
            [entry(i) + (int(cust_rows[i]),) for i in range(len(cand_rows))],
            key=lambda e: (-e[0], e[1]),
        )
        seg_col = cust.col("c_mktsegment")
        top, _req = lazy_topk_filter(
            ctx, candidates, lambda rows: seg_col[rows] == seg, 10,
            cust_layout, chunk_size=32, filter_key=lambda c: c[3],
        )
    else:
        if variant == "bitset":
            bits = remote_filter_replicate(
                ctx, Bitset(bits=cust.col("c_mktsegment") == seg))
            ctx.stats.add_extra("replicated_bitset_bits", len(bits))
            ok = bits.bits[cust_rows] if cand_rows.size else np.zeros(0, bool)
        else:  # repl_attr
            ok = db.repl_customer_segment[cust_rows] == seg
        items = [entry(i) for i in np.flatnonzero(ok)]
        top = TopKList.from_items(10, items)
    final = global_topk(ctx, top, 10, ROOT)
    if ctx.node_id != ROOT:
        return None
    rows = [
        (e[1][1], Fixed(e[0], 4), from_days(e[1][0]))
        for e in final.entries
    ]
    return QueryResult(columns=["l_orderkey", "revenue", "o_orderdate"],
                       rows=rows)


# ---------------------------------------------------------------------------
# Q4: order priority checking

def run_q4(ctx, db, params, variant="default"):
    _check_variant(4, variant)
    lo = to_days(params["date"])
    hi = to_days(add_months(params["date"], 3))
    orders = db.table("orders")
    li = db.table("lineitem")
    ctx.stats.rows_scanned += orders.row_count + li.row_count

    late = li.col("l_commitdate") < li.col("l_receiptdate")
    orow = _local_order_rows(db)
    late_any = np.zeros(orders.row_count, dtype=bool)
    late_any[orow[late]] = True
    od = orders.col("o_orderdate")
    omask = (od >= lo) & (od < hi) & late_any
    counts = np.bincount(orders.col("o_orderpriority")[omask], minlength=5)
    total = _reduce_vec(ctx, counts)
    if ctx.node_id != ROOT:
        return None
    rows = [
        (tpch.PRIORITIES[i], int(total[i])) for i in range(5) if total[i] > 0
    ]
    return QueryResult(columns=["o_orderpriority", "order_count"], rows=rows)


# ---------------------------------------------------------------------------
# Q5: local supplier volume

def run_q5(ctx, db, params, variant="default"):
    _check_variant(5, variant)
    lo = to_days(params["date"])
    hi = to_days(add_months(params["date"], 12))
    region = tpch.REGIONS.index(params["region"])
    orders = db.table("orders")
    li = db.table("lineitem")
    cust = db.table("customer")
    ctx.stats.rows_scanned += orders.row_count + li.row_count

    od = orders.col("o_orderdate")
    omask = (od >= lo) & (od < hi)
    orow = _local_order_rows(db)
    # supplier nation is replicated, so the region filter is local
    s_nation = db.repl_supplier_nation[li.col("l_suppkey") - 1]
    lmask = omask[orow] & (_NATION_REGION[s_nation] == region)
    cust_rows = orders.col("o_custkey")[orow[lmask]] - 1
    c_nation = fetch_remote_values(
        ctx, cust_rows, cust.col("c_nationkey"), db.layouts["customer"])
    match = c_nation == s_nation[lmask]
    rev = np.zeros(25, dtype=np.int64)
    np.add.at(rev, s_nation[lmask][match], _revenue(li, lmask)[match])
    total = _reduce_vec(ctx, rev)
    if ctx.node_id != ROOT:
        return None
    rows = [
        (tpch.NATION_NAMES[i], Fixed(int(total[i]), 4))
        for i in sorted(range(25),
                        key=lambda i: (-total[i], tpch.NATION_NAMES[i]))
        if total[i] > 0
    ]
    return QueryResult(columns=["n_name", "revenue"], rows=rows)


# ---------------------------------------------------------------------------
# Q11: important stock identification

def run_q11(ctx, db, params, variant="default"):
    _check_variant(11, variant)
    nation = tpch.NATION_NAMES.index(params["nation"])
    frac: Fraction = params["fraction"]
    sup = db.table("supplier")
    ps = db.table("partsupp")
    part = db.table("part")
    ctx.stats.rows_scanned += ps.row_count

    bits = remote_filter_replicate(
        ctx, Bitset(bits=sup.col("s_nationkey") == nation))
    ctx.stats.add_extra("replicated_bitset_bits", len(bits))
    keep = bits.bits[ps.col("ps_suppkey") - 1]
    value = ps.col("ps_supplycost") * ps.col("ps_availqty")
    p_local = (ps.col("ps_partkey") - 1) - part.partition.first_global_row
    sums = np.zeros(part.row_count, dtype=np.int64)
    np.add.at(sums, p_local[keep], value[keep])
    grand = int(_allreduce_vec(ctx, np.array([sums.sum()]))[0])

    # value > fraction * grand, compared exactly in integers
    qual = np.flatnonzero(
        sums * frac.denominator > grand * frac.numerator)
    first = part.partition.first_global_row
    mine = [(int(sums[i]), int(first + i) + 1) for i in qual]
    parts = cl.gather(ctx, pickle.dumps(mine, protocol=4), ROOT)
    if ctx.node_id != ROOT:
        return None
    allq = [e for p in parts for e in pickle.loads(p)]
    allq.sort(key=lambda e: (-e[0], e[1]))
    return QueryResult(
        columns=["ps_partkey", "value"],
        rows=[(k, Fixed(v, 2)) for v, k in allq],
    )


# ---------------------------------------------------------------------------
# Q13: customer distribution

def _comment_matches(comment: str, w1: str, w2: str) -> bool:
    i = comment.find(w1)
    return i >= 0 and comment.find(w2, i + len(w1)) >= 0


def run_q13(ctx, db, params, variant="default"):
    _check_variant(13, variant)
    orders = db.table("orders")
    cust = db.table("customer")
    cust_layout = db.layouts["customer"]
    ctx.stats.rows_scanned += orders.row_count

    w1, w2 = params["word1"], params["word2"]
    keep = np.array(
        [not _comment_matches(c, w1, w2)
         for c in orders.columns["o_comment"].values],
        dtype=bool,
    )
    cust_rows = orders.col("o_custkey")[keep] - 1
    keys, counts = np.unique(cust_rows, return_counts=True)
    per_cust = exchange_key_counts(ctx, keys, counts, cust_layout)
    # histogram over this node's own customers, including zero-order ones
    assert len(per_cust) == cust.row_count
    hist = np.bincount(per_cust)
    local = {int(c): int(n) for c, n in enumerate(hist) if n > 0}
    out = cl.reduce(ctx, pickle.dumps(local, protocol=4), _dict_sum_op(), ROOT)
    if ctx.node_id != ROOT:
        return None
    merged = pickle.loads(out)
    rows = sorted(merged.items(), key=lambda kv: (-kv[1], -kv[0]))
    return QueryResult(
        columns=["c_count", "custdist"],
        rows=[(c, n) for c, n in rows],
    )


# ---------------------------------------------------------------------------
# Q14: promotion effect

def run_q14(ctx, db, params, variant="default"):
    _check_variant(14, variant)
    lo = to_days(params["date"])
    hi = to_days(add_months(params["date"], 1))
    li = db.table("lineitem")
    part = db.table("part")
    ctx.stats.rows_scanned += li.row_count

    sd = li.col("l_shipdate")
    m = (sd >= lo) & (sd < hi)
    part_rows = li.col("l_partkey")[m] - 1
    promo_codes = np.array(
        [t.startswith("PROMO") for t in part.columns["p_type"].dictionary]
    )
    p_type = part.col("p_type")
    per_owner, inverse = group_keys_by_owner(part_rows, db.layouts["part"])
    bits = remote_filter_request(
        ctx, per_owner, lambda rows: promo_codes[p_type[rows]],
        db.layouts["part"],
    )
    promo = bits.bits[inverse] if part_rows.size else np.zeros(0, bool)
    rev = _revenue(li, m)
    sums = np.array([rev[promo].sum(), rev.sum()], dtype=np.int64)
    total = _reduce_vec(ctx, sums)
    if ctx.node_id != ROOT:
        return None
    promo_rev, all_rev = int(total[0]), int(total[1])
    return QueryResult(
        columns=["promo_revenue"],
        rows=[(Rat(100 * promo_rev, all_rev, 0),)],
    )


# ---------------------------------------------------------------------------
# Q15: top supplier

def run_q15(ctx, db, params, variant="approx"):
    _check_variant(15, variant)
    lo = to_days(params["date"])
    hi = to_days(add_months(params["date"], 3))
    li = db.table("lineitem")
    sup = db.table("supplier")
    sup_layout = db.layouts["supplier"]
    nsupp = sup.partition.total_rows
    ctx.stats.rows_scanned += li.row_count

    sd = li.col("l_shipdate")
    m = (sd >= lo) & (sd < hi)
    partial = np.zeros(nsupp, dtype=np.int64)
    np.add.at(partial, li.col("l_suppkey")[m] - 1, _revenue(li, m))
    agg = Aggregation(partial, sup_layout)

    k = 8
    while True:
        if variant == "approx":
            top, stats = approx_topk_sum(ctx, agg, k, m_bits=8)
        else:
            top, stats = naive_topk_sum(
                ctx, agg, k, use_1factor=(variant == "naive_1factor"))
        ctx.stats.add_extra("q15_value_bytes", stats.phase1_value_bytes)
        ctx.stats.add_extra("q15_entries", stats.phase1_entries)
        ctx.stats.add_extra("q15_phase5_bytes", stats.phase5_payload_bytes)
        if ctx.node_id == ROOT:
            more_ties_possible = (
                len(top) == k and top.entries[-1][0] == top.entries[0][0]
            )
        else:
            more_ties_possible = None
        flag = cl.broadcast(
            ctx, bytes([more_ties_possible]) if ctx.node_id == ROOT else None,
            ROOT,
        )
        if not flag[0]:
            break
        k *= 2

    if ctx.node_id == ROOT:
        best = top.entries[0][0] if len(top) else 0
        winners = [e for e in top.entries if e[0] == best and e[0] > 0]
        winners.sort(key=lambda e: e[1])
        supp_keys = np.array([e[1] for e in winners], dtype=np.int64)
    else:
        winners, supp_keys = None, None
    attrs = late_materialize(
        ctx, supp_keys,
        lambda rows: [(sup.columns["s_name"].values[i],
                       sup.columns["s_address"].values[i],
                       sup.columns["s_phone"].values[i]) for i in rows],
        sup_layout, ROOT,
    )
    if ctx.node_id != ROOT:
        return None
    rows = [
        (e[1] + 1, a[0], a[1], a[2], Fixed(e[0], 4))
        for e, a in zip(winners, attrs)
    ]
    return QueryResult(
        columns=["s_suppkey", "s_name", "s_address", "s_phone",
                 "total_revenue"],
        rows=rows,
    )


# ---------------------------------------------------------------------------
# Q18: large volume customer

def run_q18(ctx, db, params, variant="default"):
    _check_variant(18, variant)
    threshold = params["quantity"]
    orders = db.table("orders")
    li = db.table("lineitem")
    cust_layout = db.layouts["customer"]
    ctx.stats.rows_scanned += orders.row_count + li.row_count

    orow = _local_order_rows(db)
    qty = np.zeros(orders.row_count, dtype=np.int64)
    np.add.at(qty, orow, li.col("l_quantity"))
    qual = np.flatnonzero(qty > threshold)
    first = orders.partition.first_global_row
    items = [
        (int(orders.col("o_totalprice")[i]),
         (int(orders.col("o_orderdate")[i]), int(first + i) + 1),
         (int(orders.col("o_custkey")[i]), int(qty[i])))
        for i in qual
    ]
    top = global_topk(ctx, TopKList.from_items(100, items), 100, ROOT)
    if ctx.node_id == ROOT:
        cust_keys = np.array([e[2][0] - 1 for e in top.entries], dtype=np.int64)
    else:
        cust_keys = None
    cust = db.table("customer")
    names = late_materialize(
        ctx, cust_keys,
        lambda rows: [cust.columns["c_name"].values[i] for i in rows],
        cust_layout, ROOT,
    )
    if ctx.node_id != ROOT:
        return None
    rows = [
        (nm, e[2][0], e[1][1], from_days(e[1][0]), Fixed(e[0], 2), e[2][1])
        for e, nm in zip(top.entries, names)
    ]
    return QueryResult(
        columns=["c_name", "c_custkey", "o_orderkey", "o_orderdate",
                 "o_totalprice", "sum_qty"],
        rows=rows,
    )


# ---------------------------------------------------------------------------
# Q21: suppliers who kept orders waiting

def run_q21(ctx, db, params, variant="bitset"):
    _check_variant(21, variant)
    nation = tpch.NATION_NAMES.index(params["nation"])
    orders = db.table("orders")
    li = db.table("lineitem")
    sup = db.table("supplier")
    sup_layout = db.layouts["supplier"]
    nsupp = sup.partition.total_rows
    ctx.stats.rows_scanned += orders.row_count + li.row_count

    status_f = orders.columns["o_orderstatus"].dictionary.index("F")
    is_f = orders.col("o_orderstatus") == status_f
    orow = _local_order_rows(db)
    supp = li.col("l_suppkey") - 1
    late = li.col("l_receiptdate") > li.col("l_commitdate")

    pair = orow * nsupp + supp
    upair = np.unique(pair)
    n_supp_order = np.bincount(upair // nsupp, minlength=orders.row_count)
    lpair = np.unique(pair[late])
    lorder, lsupp = lpair // nsupp, lpair % nsupp
    n_late_order = np.bincount(lorder, minlength=orders.row_count)
    sole = is_f & (n_late_order == 1) & (n_supp_order >= 2)
    counted = lsupp[sole[lorder]]
    counts = np.bincount(counted, minlength=nsupp)

    if variant == "bitset":
        bits = remote_filter_replicate(
            ctx, Bitset(bits=sup.col("s_nationkey") == nation))
        ctx.stats.add_extra("replicated_bitset_bits", len(bits))
        counts[~bits.bits] = 0
    elif variant == "repl_attr":
        counts[db.repl_supplier_nation != nation] = 0
    else:  # late: filter only the suppliers that actually held up orders
        keys = np.flatnonzero(counts)
        per_owner, inverse = group_keys_by_owner(keys, sup_layout)
        s_nat = sup.col("s_nationkey")
        bits = remote_filter_request(
            ctx, per_owner, lambda rows: s_nat[rows] == nation, sup_layout)
        drop = keys[~bits.bits[inverse]] if keys.size else keys
        counts[drop] = 0

    keys = np.flatnonzero(counts)
    dense = exchange_key_counts(ctx, keys, counts[keys], sup_layout)
    first, _ = sup_layout[ctx.node_id]
    items = [(int(v), int(first + i), None)
             for i, v in enumerate(dense.tolist()) if v > 0]
    top = global_topk(ctx, TopKList.from_items(100, items), 100, ROOT)

    supp_keys = (np.array([e[1] for e in top.entries], dtype=np.int64)
                 if ctx.node_id == ROOT else None)
    names = late_materialize(
        ctx, supp_keys,
        lambda rows: [sup.columns["s_name"].values[i] for i in rows],
        sup_layout, ROOT,
    )
    if ctx.node_id != ROOT:
        return None
    rows = [(nm, e[0]) for e, nm in zip(top.entries, names)]
    return QueryResult(columns=["s_name", "numwait"], rows=rows)


_RUNNERS = {
    1: run_q1, 2: run_q2, 3: run_q3, 4: run_q4, 5: run_q5, 11: run_q11,
    13: run_q13, 14: run_q14, 15: run_q15, 18: run_q18, 21: run_q21,
}


def run_query(ctx, db, qid: int, params=None, variant=None):
    """Dispatch one node's execution of a query; result at node 0."""
    if qid not in _RUNNERS:
        raise ValueError(f"unknown query {qid}")
    if variant is None:
        variant = variants_for(qid)[0]
    full = default_params(qid, db.sf)
    if params:
        full.update(params)
    return _RUNNERS[qid](ctx, db, full, variant)
