"""Distributed query-processing building blocks.

Remote filters (request-response and replicated-bitset) with a bit-cost
model, top-k selection protocols (exact merge, lazy filtering, m-bit
approximate sums), and late materialization of output-only attributes.
"""

from __future__ import annotations

import math
import pickle
import struct
from dataclasses import dataclass, field

import numpy as np

from . import cluster as cl
from .codec import (
    Bitset,
    VarIntBlock,
    bitset_decode,
    bitset_encode,
    delta_varint_decode,
    delta_varint_encode,
)
from .errors import ProtocolError

# ---------------------------------------------------------------------------
# remote-filter cost model

@dataclass(frozen=True)
class FilterCostInputs:
    n: int          # requested keys after local filtering, global
    m_table: int    # remote table row count, global
    P: int
    gamma: float    # fraction of remote rows passing the remote filter

    def __post_init__(self):
        if self.n < 0 or self.m_table < 1 or self.P < 1:
            raise ValueError("need n >= 0, m_table >= 1, P >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")


@dataclass(frozen=True)
class FilterCostEstimate:
    alt1_bits: float | None  # request-response; None when inapplicable
    alt2_bits: float         # replicated bitset
    choice: str              # "alt1" | "alt2"


def estimate_filter_bits(c: FilterCostInputs) -> FilterCostEstimate:
    """Per-node bit estimates for the two remote-filter strategies.

    Request-response costs (n/P)*log2(m*P/n) bits; replicating the filter
    bitset costs gamma*m*log2(1/gamma) bits (information content of the
    bit vector).  When each node would request at least the whole remote
    table (n/P >= m), the request estimate is meaningless and replication
    wins by construction.
    """
    if c.gamma in (0.0, 1.0):
        alt2 = 0.0
    else:
        alt2 = c.gamma * c.m_table * math.log2(1.0 / c.gamma)
    if c.n == 0:
        return FilterCostEstimate(0.0, alt2, "alt1" if 0.0 <= alt2 else "alt2")
    if c.n / c.P >= c.m_table:
        return FilterCostEstimate(None, alt2, "alt2")
    alt1 = (c.n / c.P) * math.log2(c.m_table * c.P / c.n)
    return FilterCostEstimate(alt1, alt2, "alt1" if alt1 <= alt2 else "alt2")


# ---------------------------------------------------------------------------
# key grouping helpers

def group_keys_by_owner(global_rows, layout):
    """Sorted unique keys split per owning node, plus the index of each
    input row's key in the overall sorted-unique array.

    Because partitions are contiguous ranges in node order, concatenating
    the per-owner groups reproduces the sorted-unique order.
    """
    rows = np.asarray(global_rows, dtype=np.int64)
    uniq, inverse = np.unique(rows, return_inverse=True)
    bounds = [f for f, _ in layout[1:]]
    per_owner = np.split(uniq, np.searchsorted(uniq, bounds))
    return per_owner, inverse


# ---------------------------------------------------------------------------
# remote filters

def remote_filter_request(ctx, keys_per_owner, predicate, layout) -> Bitset:
    """Alternative 1: ask each owner to evaluate a predicate for explicit keys.

    ``keys_per_owner[d]`` holds the sorted, deduplicated global rows this
    node wants owner d to test; ``predicate(local_rows)`` is evaluated by
    the owner over its own partition.  Returns one bit per requested key,
    in request order (owner-group concatenation).
    """
    if len(keys_per_owner) != ctx.P:
        raise ValueError(f"need {ctx.P} key groups, got {len(keys_per_owner)}")
    with ctx.phase("filter_request"):
        requests = [
            delta_varint_encode(keys).to_bytes() for keys in keys_per_owner
        ]
        incoming = cl.all_to_all_1factor(ctx, requests)

        first, count = layout[ctx.node_id]
        replies = []
        for buf in incoming:
            block, _ = VarIntBlock.from_bytes(buf)
            keys = delta_varint_decode(block)
            if keys.size and (keys.min() < first or keys.max() >= first + count):
                ctx.transport.abort()
                raise ProtocolError(
                    f"filter request key outside node {ctx.node_id} range "
                    f"[{first},{first + count})"
                )
            bits = predicate(keys - first) if keys.size else np.zeros(0, bool)
            replies.append(bitset_encode(Bitset(bits=np.asarray(bits, bool))))
        answers = cl.all_to_all_1factor(ctx, replies)
    return Bitset.concat([bitset_decode(a) for a in answers])


def remote_filter_replicate(ctx, local_bits: Bitset) -> Bitset:
    """Alternative 2: allgather the compressed local bitsets; the node-order
    concatenation is the global bitset, identical everywhere."""
    with ctx.phase("filter_replicate"):
        parts = cl.allgather(ctx, bitset_encode(local_bits))
    return Bitset.concat([bitset_decode(p) for p in parts])


# ---------------------------------------------------------------------------
# top-k lists

@dataclass
class TopKList:
    """At most k (value, key, payload) entries sorted by value descending,
    ties broken by ascending key.  Values are integers; keys may be any
    totally ordered type (tuples serve composite ORDER BYs)."""

    k: int
    entries: list = field(default_factory=list)

    @staticmethod
    def _sort_key(e):
        return (-e[0], e[1])

    @classmethod
    def from_items(cls, k: int, items) -> "TopKList":
        entries = sorted(items, key=cls._sort_key)[:k]
        return cls(k=k, entries=entries)

    def merge(self, other: "TopKList") -> "TopKList":
        if other.k != self.k:
            raise ValueError("cannot merge top-k lists of different capacity")
        merged = sorted(self.entries + other.entries, key=self._sort_key)
        return TopKList(k=self.k, entries=merged[: self.k])

    def values(self):
        return [e[0] for e in self.entries]

    def threshold(self):
        """Value of the k-th entry, or None while the list is not full."""
        return self.entries[-1][0] if len(self.entries) == self.k else None

    def __len__(self):
        return len(self.entries)

    def to_bytes(self) -> bytes:
        return pickle.dumps((self.k, self.entries), protocol=4)

    @staticmethod
    def from_bytes(buf: bytes) -> "TopKList":
        k, entries = pickle.loads(buf)
        return TopKList(k=k, entries=entries)


def _merge_op() -> cl.ReduceOperator:
    def combine(a: bytes, b: bytes) -> bytes:
        return TopKList.from_bytes(a).merge(TopKList.from_bytes(b)).to_bytes()

    return cl.ReduceOperator(combine=combine)


def global_topk(ctx, local: TopKList, k: int, root: int = 0) -> TopKList | None:
    """Merge-reduce the per-node lists; exact global top-k at root."""
    ctx.transport.rendezvous(ctx.node_id, ("global_topk", root, k))
    if local.k != k:
        ctx.transport.abort()
        raise ProtocolError(f"local list capacity {local.k} != k={k}")
    out = cl.reduce(ctx, local.to_bytes(), _merge_op(), root)
    return TopKList.from_bytes(out) if ctx.node_id == root else None


def global_allreduce_topk(ctx, local: TopKList, k: int) -> TopKList:
    ctx.transport.rendezvous(ctx.node_id, ("global_allreduce_topk", k))
    out = cl.allreduce(ctx, local.to_bytes(), _merge_op())
    return TopKList.from_bytes(out)


# ---------------------------------------------------------------------------
# lazy remote filtering of top-k candidates

def lazy_topk_filter(
    ctx,
    candidates,
    predicate,
    k: int,
    layout,
    chunk_size: int | None = None,
    recheck_every: int | None = None,
    filter_key=None,
):
    """Filter locally ranked candidates through a remote predicate lazily.

    ``candidates`` is this node's list of (value, filter_key, payload)
    sorted by value descending; ``filter_key`` is a global row of the
    remote filter table.  Chunks of so-far-unfiltered candidates are sent
    through :func:`remote_filter_request` until k local survivors are found
    or candidates run out; every node keeps entering the collectives until
    all are done.  Returns (local TopKList of survivors, keys requested).

    ``recheck_every`` optionally runs a global survivor-threshold allreduce
    every that many rounds so nodes whose remaining candidates cannot reach
    the global top-k stop requesting early (off by default).

    ``filter_key`` optionally extracts the remote filter key from a
    candidate; by default the entry key (element 1) is the filter key.
    """
    if filter_key is None:
        filter_key = lambda c: c[1]  # noqa: E731
    if chunk_size is None:
        chunk_size = max(k, 64)
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    survivors: list = []
    pos = 0
    requested = 0
    done_op = cl.ReduceOperator(
        combine=lambda a, b: bytes([a[0] & b[0]])
    )
    rounds = 0
    while True:
        chunk = [] if len(survivors) >= k else candidates[pos:pos + chunk_size]
        pos += len(chunk)
        keys = np.asarray([filter_key(c) for c in chunk], dtype=np.int64)
        per_owner, inverse = group_keys_by_owner(keys, layout)
        requested += sum(len(g) for g in per_owner)
        bits = remote_filter_request(ctx, per_owner, predicate, layout)
        if chunk:
            passed = bits.bits[inverse]
            survivors.extend(c for c, ok in zip(chunk, passed) if ok)
        rounds += 1
        if recheck_every and rounds % recheck_every == 0:
            glob = global_allreduce_topk(
                ctx, TopKList.from_items(k, survivors), k)
            thr = glob.threshold()
            if thr is not None:
                while pos < len(candidates) and candidates[pos][0] < thr:
                    pos += 1  # cannot reach the global top-k
        done = len(survivors) >= k or pos >= len(candidates)
        agreed = cl.allreduce(ctx, bytes([done]), done_op)
        if agreed[0]:
            return TopKList.from_items(k, survivors), requested


# ---------------------------------------------------------------------------
# m-bit approximation of partial sums

@dataclass
class EncodedPartialSums:
    """Per-value m-bit windows anchored at a shared per-group offset.

    For a group whose maximum has its highest one-bit at position h, each
    value is coded as its m_bits window ending at h; the implied bounds are
    lower = code << shift and upper = lower + 2^shift - 1 with
    shift = max(h - m_bits + 1, 0), exact (upper = lower) when shift = 0.
    An all-zero group has offset -1.
    """

    m_bits: int
    group_size: int
    offsets: np.ndarray  # int16 per group
    codes: np.ndarray    # uint64 per value

    def __len__(self):
        return len(self.codes)

    def _shifts(self) -> np.ndarray:
        per_group = np.maximum(self.offsets.astype(np.int64) - self.m_bits + 1, 0)
        return np.repeat(per_group, self.group_size)[: len(self.codes)]

    def lower(self) -> np.ndarray:
        return (self.codes.astype(np.int64)) << self._shifts()

    def upper(self) -> np.ndarray:
        s = self._shifts()
        return self.lower() + ((np.int64(1) << s) - 1)

    # wire form: [group_size u32][m_bits u8][per group: offset i16,
    # m_bits-wide codes packed MSB-first, padded to a whole byte]
    def to_bytes(self) -> bytes:
        out = bytearray(struct.pack("<IB", self.group_size, self.m_bits))
        n = len(self.codes)
        for gi in range(len(self.offsets)):
            lo = gi * self.group_size
            group = self.codes[lo: min(lo + self.group_size, n)]
            out += struct.pack("<h", int(self.offsets[gi]))
            out += _pack_codes(group, self.m_bits)
        return bytes(out)

    @staticmethod
    def from_bytes(buf: bytes, n: int) -> tuple["EncodedPartialSums", int]:
        group_size, m_bits = struct.unpack_from("<IB", buf, 0)
        pos = 5
        n_groups = (n + group_size - 1) // group_size if n else 0
        offsets = np.empty(n_groups, dtype=np.int16)
        codes = np.empty(n, dtype=np.uint64)
        for gi in range(n_groups):
            (offsets[gi],) = struct.unpack_from("<h", buf, pos)
            pos += 2
            lo = gi * group_size
            cnt = min(group_size, n - lo)
            nbytes = (cnt * m_bits + 7) // 8
            codes[lo:lo + cnt] = _unpack_codes(buf[pos:pos + nbytes], cnt, m_bits)
            pos += nbytes
        return EncodedPartialSums(m_bits, group_size, offsets, codes), pos

    def code_bytes(self) -> int:
        """Payload bytes spent on codes alone (no offsets, no header)."""
        n = len(self.codes)
        total = 0
        lo = 0
        while lo < n:
            cnt = min(self.group_size, n - lo)
            total += (cnt * self.m_bits + 7) // 8
            lo += cnt
        return total


def _pack_codes(codes: np.ndarray, m_bits: int) -> bytes:
    if codes.size == 0:
        return b""
    shifts = np.arange(m_bits - 1, -1, -1, dtype=np.uint64)
    bits = ((codes[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)
    return np.packbits(bits.ravel()).tobytes()


def _unpack_codes(buf: bytes, count: int, m_bits: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8))[: count * m_bits]
    bits = bits.reshape(count, m_bits).astype(np.uint64)
    weights = np.uint64(1) << np.arange(m_bits - 1, -1, -1, dtype=np.uint64)
    return bits @ weights


def encode_partial_sums(values, m_bits: int = 8,
                        group_size: int = 1024) -> EncodedPartialSums:
    if m_bits < 1:
        raise ValueError("m_bits must be >= 1")
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    v = np.asarray(values, dtype=np.int64)
    if v.size and v.min() < 0:
        raise ValueError("partial sums must be non-negative")
    n = v.size
    n_groups = (n + group_size - 1) // group_size if n else 0
    offsets = np.empty(n_groups, dtype=np.int16)
    codes = np.empty(n, dtype=np.uint64)
    for gi in range(n_groups):
        lo = gi * group_size
        group = v[lo:lo + group_size]
        mx = int(group.max())
        h = mx.bit_length() - 1  # -1 for an all-zero group
        offsets[gi] = h
        shift = max(h - m_bits + 1, 0)
        codes[lo:lo + len(group)] = (group >> shift).astype(np.uint64)
    return EncodedPartialSums(m_bits, group_size, offsets, codes)


# ---------------------------------------------------------------------------
# distributed top-k by total sum

@dataclass
class Aggregation:
    """Local partial sums over a global key space that is range-partitioned
    for ownership.  ``partial[i]`` is this node's contribution to global
    key i; keys this node never saw are simply zero."""

    partial: np.ndarray
    key_layout: list

    def __post_init__(self):
        self.partial = np.asarray(self.partial, dtype=np.int64)
        total = self.key_layout[-1][0] + self.key_layout[-1][1]
        if len(self.partial) != total:
            raise ValueError(
                f"partial sums cover {len(self.partial)} keys, layout {total}"
            )


@dataclass
class VolumeStats:
    """Byte accounting for the sum-exchange phases of a top-k protocol."""

    phase1_payload_bytes: int = 0
    phase1_value_bytes: int = 0  # packed codes (approx) or raw u64s (naive)
    phase1_entries: int = 0      # nonzero partial sums sent
    phase5_payload_bytes: int = 0
    phase5_entries: int = 0
    pruned_keys: int = 0
    surviving_keys: int = 0
    max_bound_width: int = 0


def _u64_bytes(values: np.ndarray) -> bytes:
    return np.ascontiguousarray(values, dtype="<u8").tobytes()


def _u64_from(buf: bytes) -> np.ndarray:
    return np.frombuffer(buf, dtype="<u8").astype(np.int64)


def _nonzero_per_owner(agg: Aggregation):
    """(keys, values) of this node's nonzero partial sums, split by owner."""
    nz = np.flatnonzero(agg.partial)
    out = []
    for first, count in agg.key_layout:
        sel = nz[(nz >= first) & (nz < first + count)]
        out.append((sel, agg.partial[sel]))
    return out


def approx_topk_sum(ctx, agg: Aggregation, k: int, m_bits: int = 8,
                    group_size: int = 1024):
    """Exact global top-k (key, total) using m-bit approximate exchange.

    Phase 1 sends every nonzero partial sum as an m-bit code (plus its key);
    owners accumulate per-key lower/upper bounds, a global reduce finds the
    k-th highest lower bound, keys whose upper bound falls below it are
    pruned, and exact 64-bit values are fetched only for the rest.  The
    threshold is at most the true k-th total, so the pruning never loses a
    true top-k key and the result is exact.

    Returns (TopKList at root else None, VolumeStats).
    """
    stats = VolumeStats()
    first, count = agg.key_layout[ctx.node_id]

    if ctx.P == 1:
        # everything is local: exact top-k with no exchange phases
        order = np.argsort(-agg.partial, kind="stable")[:k]
        return TopKList.from_items(
            k, [(int(agg.partial[i]), int(i), None) for i in order]
        ), stats

    # (1) encode and exchange nonzero partial sums
    per_owner = _nonzero_per_owner(agg)
    payloads = []
    for keys, values in per_owner:
        enc = encode_partial_sums(values, m_bits, group_size)
        payloads.append(
            delta_varint_encode(keys).to_bytes() + enc.to_bytes()
        )
        stats.phase1_value_bytes += enc.code_bytes()
        stats.phase1_entries += len(keys)
    stats.phase1_payload_bytes = sum(map(len, payloads))
    with ctx.phase("approx_phase1"):
        incoming = cl.all_to_all_1factor(ctx, payloads)

    # (2) per-key bound accumulation at the owner
    lower_sum = np.zeros(count, dtype=np.int64)
    upper_sum = np.zeros(count, dtype=np.int64)
    for buf in incoming:
        block, pos = VarIntBlock.from_bytes(buf)
        keys = delta_varint_decode(block)
        if keys.size and (keys.min() < first or keys.max() >= first + count):
            ctx.transport.abort()
            raise ProtocolError("partial sum key outside owner range")
        enc, _ = EncodedPartialSums.from_bytes(buf[pos:], len(keys))
        np.add.at(lower_sum, keys - first, enc.lower())
        np.add.at(upper_sum, keys - first, enc.upper())
    if count:
        stats.max_bound_width = int((upper_sum - lower_sum).max())

    # (3) global k-th highest lower bound
    local = TopKList.from_items(
        k, [(int(lower_sum[i]), int(first + i), None)
            for i in np.argsort(-lower_sum, kind="stable")[:k]]
    )
    glob = global_allreduce_topk(ctx, local, k)
    threshold = glob.threshold()

    # (4) prune keys that cannot reach the top-k
    if threshold is None:
        survive = np.arange(count)
    else:
        survive = np.flatnonzero(upper_sum >= threshold)
    stats.pruned_keys = count - len(survive)
    stats.surviving_keys = len(survive)

    # (5) fetch exact partials for survivors from every node
    want = survive + first
    with ctx.phase("approx_phase5"):
        requests = [delta_varint_encode(want).to_bytes()] * ctx.P
        asked = cl.all_to_all_1factor(ctx, requests)
        replies = []
        for buf in asked:
            block, _ = VarIntBlock.from_bytes(buf)
            keys = delta_varint_decode(block)
            replies.append(_u64_bytes(agg.partial[keys]))
        stats.phase5_payload_bytes = sum(map(len, replies))
        stats.phase5_entries = len(want) * ctx.P
        exact_parts = cl.all_to_all_1factor(ctx, replies)

    # (6) exact totals and final selection
    totals = np.zeros(len(survive), dtype=np.int64)
    for buf in exact_parts:
        totals += _u64_from(buf)
    order = np.argsort(-totals, kind="stable")[:k]
    local_final = TopKList.from_items(
        k, [(int(totals[i]), int(want[i]), None) for i in order]
    )
    return global_topk(ctx, local_final, k, root=0), stats


def naive_topk_sum(ctx, agg: Aggregation, k: int, use_1factor: bool = True):
    """Exact global top-k by exchanging every nonzero partial sum as a full
    64-bit value (key sets delta-varint alongside)."""
    stats = VolumeStats()
    first, count = agg.key_layout[ctx.node_id]
    per_owner = _nonzero_per_owner(agg)
    payloads = []
    for keys, values in per_owner:
        payloads.append(delta_varint_encode(keys).to_bytes() + _u64_bytes(values))
        stats.phase1_value_bytes += 8 * len(keys)
        stats.phase1_entries += len(keys)
    stats.phase1_payload_bytes = sum(map(len, payloads))
    exchange = cl.all_to_all_1factor if use_1factor else cl.all_to_all_naive
    with ctx.phase("naive_phase1"):
        incoming = exchange(ctx, payloads)

    totals = np.zeros(count, dtype=np.int64)
    for buf in incoming:
        block, pos = VarIntBlock.from_bytes(buf)
        keys = delta_varint_decode(block)
        if keys.size and (keys.min() < first or keys.max() >= first + count):
            ctx.transport.abort()
            raise ProtocolError("partial sum key outside owner range")
        np.add.at(totals, keys - first, _u64_from(buf[pos:]))
    order = np.argsort(-totals, kind="stable")[:k]
    local = TopKList.from_items(
        k, [(int(totals[i]), int(first + i), None) for i in order]
    )
    return global_topk(ctx, local, k, root=0), stats


# ---------------------------------------------------------------------------
# late materialization

def late_materialize(ctx, result_keys, lookup, layout, root: int = 0):
    """Fetch output-only attributes for the final result keys.

    The root scatters per-owner key lists, each owner resolves its keys via
    ``lookup(local_rows) -> list of row values``, and the root gathers the
    replies and realigns them with ``result_keys`` (which may repeat keys
    and appear in any order).  Non-root nodes pass result_keys = None and
    receive None.
    """
    ctx.transport.rendezvous(ctx.node_id, ("late_materialize", root))
    total = layout[-1][0] + layout[-1][1]
    with ctx.phase("late_materialize"):
        if ctx.node_id == root:
            keys = np.asarray(result_keys, dtype=np.int64)
            if keys.size and (keys.min() < 0 or keys.max() >= total):
                ctx.transport.abort()
                raise ProtocolError("late materialization key out of range")
            per_owner, inverse = group_keys_by_owner(keys, layout)
            out = cl.scatter(
                ctx, root, [delta_varint_encode(g).to_bytes() for g in per_owner]
            )
        else:
            out = cl.scatter(ctx, root, None)

        block, _ = VarIntBlock.from_bytes(out)
        mine = delta_varint_decode(block)
        first, count = layout[ctx.node_id]
        if mine.size and (mine.min() < first or mine.max() >= first + count):
            ctx.transport.abort()
            raise ProtocolError("late materialization key outside owner range")
        rows = lookup(mine - first) if mine.size else []
        parts = cl.gather(ctx, pickle.dumps(rows, protocol=4), root)

    if ctx.node_id != root:
        return None
    flat = []
    for p in parts:
        flat.extend(pickle.loads(p))
    return [flat[i] for i in inverse]
