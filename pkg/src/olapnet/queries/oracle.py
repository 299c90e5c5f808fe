"""Single-node brute-force reference evaluation of the implemented queries.

Runs over a P=1 database with plain Python loops and dictionaries — no
collectives, no columnar tricks — and applies the same deterministic
tie-breaks and output formatting as the distributed plans.  Used only for
verification.
"""

from __future__ import annotations

import datetime
from fractions import Fraction

from .. import tpch
from .plans import _comment_matches, add_months, default_params, from_days, to_days
from .result import Fixed, QueryResult, Rat

_REGION_OF = {i: r for i, (_, r) in enumerate(tpch.NATIONS)}


def _rows(table, *cols):
    arrays = [
        table.columns[c].values if table.columns[c].kind == "text"
        else table.columns[c].values.tolist()
        for c in cols
    ]
    return zip(*arrays)


def oracle_run(db, qid: int, params=None) -> QueryResult:
    if db.P != 1:
        raise ValueError("oracle needs a single-node database")
    full = default_params(qid, db.sf)
    if params:
        full.update(params)
    return _ORACLES[qid](db, full)


def _oracle_q1(db, p):
    cutoff = to_days(datetime.date(1998, 12, 1)) - p["delta_days"]
    groups = {}
    li = db.table("lineitem")
    for qty, ext, disc, tax, rf, ls, ship in _rows(
            li, "l_quantity", "l_extendedprice", "l_discount", "l_tax",
            "l_returnflag", "l_linestatus", "l_shipdate"):
        if ship > cutoff:
            continue
        g = groups.setdefault((rf, ls), [0, 0, 0, 0, 0, 0])
        dp = ext * (100 - disc)
        g[0] += qty
        g[1] += ext
        g[2] += dp
        g[3] += dp * (100 + tax)
        g[4] += disc
        g[5] += 1
    rows = []
    for rf, ls in sorted(groups):
        s = groups[(rf, ls)]
        rows.append((
            tpch.RETURN_FLAGS[rf], tpch.LINE_STATUS[ls], s[0],
            Fixed(s[1], 2), Fixed(s[2], 4), Fixed(s[3], 6),
            Rat(s[0], s[5], 0), Rat(s[1], s[5], 2), Rat(s[4], s[5], 2),
            s[5],
        ))
    return QueryResult(
        columns=["l_returnflag", "l_linestatus", "sum_qty", "sum_base_price",
                 "sum_disc_price", "sum_charge", "avg_qty", "avg_price",
                 "avg_disc", "count_order"],
        rows=rows,
    )


def _oracle_q2(db, p):
    part = db.table("part")
    sup = db.table("supplier")
    ps = db.table("partsupp")
    region = tpch.REGIONS.index(p["region"])
    tdict = part.columns["p_type"].dictionary
    part_ok = {}
    for i, (size, tcode) in enumerate(_rows(part, "p_size", "p_type")):
        if size == p["size"] and tdict[tcode].endswith(p["type_suffix"]):
            part_ok[i + 1] = None
    cand = []
    mins = {}
    for pk, sk, cost in _rows(ps, "ps_partkey", "ps_suppkey", "ps_supplycost"):
        if pk not in part_ok:
            continue
        nat = int(sup.col("s_nationkey")[sk - 1])
        if _REGION_OF[nat] != region:
            continue
        cand.append((pk, sk, cost, nat))
        if pk not in mins or cost < mins[pk]:
            mins[pk] = cost
    recs = []
    for pk, sk, cost, nat in cand:
        if cost != mins[pk]:
            continue
        acct = int(sup.col("s_acctbal")[sk - 1])
        recs.append((acct, tpch.NATION_NAMES[nat], sk, pk))
    recs.sort(key=lambda r: (-r[0], r[1], r[2], r[3]))
    rows = []
    for acct, nname, sk, pk in recs[:100]:
        rows.append((
            Fixed(acct, 2),
            sup.columns["s_name"].values[sk - 1],
            nname,
            pk,
            part.columns["p_mfgr"].dictionary[int(part.col("p_mfgr")[pk - 1])],
            sup.columns["s_address"].values[sk - 1],
            sup.columns["s_phone"].values[sk - 1],
        ))
    return QueryResult(
        columns=["s_acctbal", "s_name", "n_name", "p_partkey", "p_mfgr",
                 "s_address", "s_phone"],
        rows=rows,
    )


def _oracle_q3(db, p):
    dd = to_days(p["date"])
    seg = tpch.SEGMENTS.index(p["segment"])
    orders = db.table("orders")
    cust = db.table("customer")
    rev = {}
    for ok, ext, disc, ship in _rows(db.table("lineitem"), "l_orderkey",
                                     "l_extendedprice", "l_discount",
                                     "l_shipdate"):
        if ship > dd:
            rev[ok] = rev.get(ok, 0) + ext * (100 - disc)
    recs = []
    for i, (ck, od) in enumerate(_rows(orders, "o_custkey", "o_orderdate")):
        okey = i + 1
        if od >= dd or okey not in rev:
            continue
        if int(cust.col("c_mktsegment")[ck - 1]) != seg:
            continue
        recs.append((rev[okey], (od, okey)))
    recs.sort(key=lambda r: (-r[0], r[1]))
    rows = [(okey, Fixed(r, 4), from_days(od)) for r, (od, okey) in recs[:10]]
    return QueryResult(columns=["l_orderkey", "revenue", "o_orderdate"],
                       rows=rows)


def _oracle_q4(db, p):
    lo, hi = to_days(p["date"]), to_days(add_months(p["date"], 3))
    late_orders = set()
    for ok, cd, rd in _rows(db.table("lineitem"), "l_orderkey",
                            "l_commitdate", "l_receiptdate"):
        if cd < rd:
            late_orders.add(ok)
    counts = {}
    orders = db.table("orders")
    for i, (od, prio) in enumerate(_rows(orders, "o_orderdate",
                                         "o_orderpriority")):
        if lo <= od < hi and i + 1 in late_orders:
            counts[prio] = counts.get(prio, 0) + 1
    rows = [(tpch.PRIORITIES[c], counts[c]) for c in sorted(counts)]
    return QueryResult(columns=["o_orderpriority", "order_count"], rows=rows)


def _oracle_q5(db, p):
    lo, hi = to_days(p["date"]), to_days(add_months(p["date"], 12))
    region = tpch.REGIONS.index(p["region"])
    orders = db.table("orders")
    cust = db.table("customer")
    sup = db.table("supplier")
    odate = orders.col("o_orderdate").tolist()
    ocust = orders.col("o_custkey").tolist()
    rev = {}
    for ok, sk, ext, disc in _rows(db.table("lineitem"), "l_orderkey",
                                   "l_suppkey", "l_extendedprice",
                                   "l_discount"):
        if not lo <= odate[ok - 1] < hi:
            continue
        snat = int(sup.col("s_nationkey")[sk - 1])
        if _REGION_OF[snat] != region:
            continue
        cnat = int(cust.col("c_nationkey")[ocust[ok - 1] - 1])
        if cnat != snat:
            continue
        rev[snat] = rev.get(snat, 0) + ext * (100 - disc)
    order = sorted(rev, key=lambda n: (-rev[n], tpch.NATION_NAMES[n]))
    rows = [(tpch.NATION_NAMES[n], Fixed(rev[n], 4)) for n in order]
    return QueryResult(columns=["n_name", "revenue"], rows=rows)


def _oracle_q11(db, p):
    nation = tpch.NATION_NAMES.index(p["nation"])
    frac: Fraction = p["fraction"]
    sup = db.table("supplier")
    sums = {}
    total = 0
    for pk, sk, qty, cost in _rows(db.table("partsupp"), "ps_partkey",
                                   "ps_suppkey", "ps_availqty",
                                   "ps_supplycost"):
        if int(sup.col("s_nationkey")[sk - 1]) != nation:
            continue
        v = cost * qty
        sums[pk] = sums.get(pk, 0) + v
        total += v
    qual = [
        (v, pk) for pk, v in sums.items()
        if v * frac.denominator > total * frac.numerator
    ]
    qual.sort(key=lambda e: (-e[0], e[1]))
    return QueryResult(columns=["ps_partkey", "value"],
                       rows=[(pk, Fixed(v, 2)) for v, pk in qual])


def _oracle_q13(db, p):
    counts = {}
    for ck, cm in _rows(db.table("orders"), "o_custkey", "o_comment"):
        if not _comment_matches(cm, p["word1"], p["word2"]):
            counts[ck] = counts.get(ck, 0) + 1
    hist = {}
    for ck in range(1, db.table("customer").row_count + 1):
        c = counts.get(ck, 0)
        hist[c] = hist.get(c, 0) + 1
    rows = sorted(hist.items(), key=lambda kv: (-kv[1], -kv[0]))
    return QueryResult(columns=["c_count", "custdist"], rows=rows)


def _oracle_q14(db, p):
    lo, hi = to_days(p["date"]), to_days(add_months(p["date"], 1))
    part = db.table("part")
    tdict = part.columns["p_type"].dictionary
    promo = total = 0
    for pk, ext, disc, ship in _rows(db.table("lineitem"), "l_partkey",
                                     "l_extendedprice", "l_discount",
                                     "l_shipdate"):
        if not lo <= ship < hi:
            continue
        r = ext * (100 - disc)
        total += r
        if tdict[int(part.col("p_type")[pk - 1])].startswith("PROMO"):
            promo += r
    return QueryResult(columns=["promo_revenue"],
                       rows=[(Rat(100 * promo, total, 0),)])


def _oracle_q15(db, p):
    lo, hi = to_days(p["date"]), to_days(add_months(p["date"], 3))
    rev = {}
    for sk, ext, disc, ship in _rows(db.table("lineitem"), "l_suppkey",
                                     "l_extendedprice", "l_discount",
                                     "l_shipdate"):
        if lo <= ship < hi:
            rev[sk] = rev.get(sk, 0) + ext * (100 - disc)
    best = max(rev.values(), default=0)
    sup = db.table("supplier")
    rows = []
    for sk in sorted(k for k, v in rev.items() if v == best and v > 0):
        rows.append((
            sk,
            sup.columns["s_name"].values[sk - 1],
            sup.columns["s_address"].values[sk - 1],
            sup.columns["s_phone"].values[sk - 1],
            Fixed(best, 4),
        ))
    return QueryResult(
        columns=["s_suppkey", "s_name", "s_address", "s_phone",
                 "total_revenue"],
        rows=rows,
    )


def _oracle_q18(db, p):
    qty = {}
    for ok, q in _rows(db.table("lineitem"), "l_orderkey", "l_quantity"):
        qty[ok] = qty.get(ok, 0) + q
    orders = db.table("orders")
    cust = db.table("customer")
    recs = []
    for i, (ck, od, tp) in enumerate(_rows(orders, "o_custkey",
                                           "o_orderdate", "o_totalprice")):
        okey = i + 1
        if qty.get(okey, 0) > p["quantity"]:
            recs.append((tp, (od, okey), ck, qty[okey]))
    recs.sort(key=lambda r: (-r[0], r[1]))
    rows = [
        (cust.columns["c_name"].values[ck - 1], ck, okey, from_days(od),
         Fixed(tp, 2), q)
        for tp, (od, okey), ck, q in recs[:100]
    ]
    return QueryResult(
        columns=["c_name", "c_custkey", "o_orderkey", "o_orderdate",
                 "o_totalprice", "sum_qty"],
        rows=rows,
    )


def _oracle_q21(db, p):
    nation = tpch.NATION_NAMES.index(p["nation"])
    orders = db.table("orders")
    sup = db.table("supplier")
    sdict = orders.columns["o_orderstatus"].dictionary
    status = orders.col("o_orderstatus").tolist()
    all_supp = {}
    late_supp = {}
    for ok, sk, cd, rd in _rows(db.table("lineitem"), "l_orderkey",
                                "l_suppkey", "l_commitdate", "l_receiptdate"):
        all_supp.setdefault(ok, set()).add(sk)
        if rd > cd:
            late_supp.setdefault(ok, set()).add(sk)
    counts = {}
    for ok, lsup in late_supp.items():
        if sdict[status[ok - 1]] != "F":
            continue
        if len(lsup) != 1 or len(all_supp[ok]) < 2:
            continue
        (sk,) = lsup
        if int(sup.col("s_nationkey")[sk - 1]) != nation:
            continue
        counts[sk] = counts.get(sk, 0) + 1
    recs = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:100]
    rows = [(sup.columns["s_name"].values[sk - 1], n) for sk, n in recs]
    return QueryResult(columns=["s_name", "numwait"], rows=rows)


_ORACLES = {
    1: _oracle_q1, 2: _oracle_q2, 3: _oracle_q3, 4: _oracle_q4,
    5: _oracle_q5, 11: _oracle_q11, 13: _oracle_q13, 14: _oracle_q14,
    15: _oracle_q15, 18: _oracle_q18, 21: _oracle_q21,
}
