import numpy as np
import pytest

from olapnet import cluster as cl
from olapnet import distops as do
from olapnet.cluster import run_cluster
from olapnet.codec import Bitset
from olapnet.distops import (
    Aggregation,
    FilterCostInputs,
    TopKList,
    approx_topk_sum,
    encode_partial_sums,
    estimate_filter_bits,
    global_topk,
    group_keys_by_owner,
    late_materialize,
    lazy_topk_filter,
    naive_topk_sum,
    remote_filter_request,
    remote_filter_replicate,
)
from olapnet.errors import ProtocolError
from olapnet.storage import range_partition


class TestFilterCost:
    def test_paper_example_alt1_wins(self):
        e = estimate_filter_bits(FilterCostInputs(1024, 4096, 8, 0.5))
        assert e.alt1_bits == pytest.approx(640.0, abs=1e-6)
        assert e.alt2_bits == pytest.approx(2048.0, abs=1e-6)
        assert e.choice == "alt1"

    def test_low_selectivity_alt2_wins(self):
        e = estimate_filter_bits(FilterCostInputs(1024, 4096, 8, 0.01))
        # 0.01 * 4096 * log2(100) ~= 272.2
        assert e.alt2_bits == pytest.approx(0.01 * 4096 * np.log2(100), abs=1e-9)
        assert round(e.alt2_bits, 1) == 272.1
        assert e.choice == "alt2"

    def test_gamma_limits(self):
        for g in (0.0, 1.0):
            e = estimate_filter_bits(FilterCostInputs(64, 4096, 8, g))
            assert e.alt2_bits == 0.0
            assert e.choice == "alt2"

    def test_requesting_whole_table_is_inapplicable(self):
        e = estimate_filter_bits(FilterCostInputs(4096 * 8, 4096, 8, 0.5))
        assert e.alt1_bits is None
        assert e.choice == "alt2"

    def test_invalid(self):
        with pytest.raises(ValueError):
            FilterCostInputs(-1, 10, 2, 0.5)
        with pytest.raises(ValueError):
            FilterCostInputs(1, 0, 2, 0.5)
        with pytest.raises(ValueError):
            FilterCostInputs(1, 10, 2, 1.5)

    def test_choice_invariant_under_log_base(self):
        # scaling both estimates by a common constant never flips argmin
        for n, m, P, g in [(100, 5000, 4, 0.3), (10, 100, 2, 0.9)]:
            e = estimate_filter_bits(FilterCostInputs(n, m, P, g))
            scaled = (e.alt1_bits * 0.30103, e.alt2_bits * 0.30103)
            assert (scaled[0] <= scaled[1]) == (e.choice == "alt1")


class TestTopKList:
    def test_two_list_merge(self):
        a = TopKList.from_items(3, [(9, 1, None), (7, 2, None), (5, 3, None)])
        b = TopKList.from_items(3, [(8, 4, None), (6, 5, None), (4, 6, None)])
        assert a.merge(b).values() == [9, 8, 7]

    def test_tie_break_key_ascending(self):
        t = TopKList.from_items(2, [(5, 9, None), (5, 1, None), (5, 4, None)])
        assert [e[1] for e in t.entries] == [1, 4]

    def test_serialization_roundtrip(self):
        t = TopKList.from_items(4, [(3, (1, "a"), b"p"), (2, (0, "z"), None)])
        back = TopKList.from_bytes(t.to_bytes())
        assert back.k == 4 and back.entries == t.entries

    def test_merge_capacity_mismatch(self):
        with pytest.raises(ValueError):
            TopKList(k=2).merge(TopKList(k=3))


class TestGlobalTopK:
    def test_p1_identity(self):
        t = TopKList.from_items(2, [(9, 0, None), (4, 1, None)])
        out = run_cluster(1, lambda ctx: global_topk(ctx, t, 2))
        assert out[0].entries == t.entries

    @pytest.mark.parametrize("P", [2, 3, 4, 8])
    def test_matches_concat_sort_oracle(self, P):
        rng = np.random.default_rng(P)
        k = 5
        per_node = [
            [(int(v), int(P * j + r), None)
             for j, v in enumerate(rng.integers(0, 40, size=12))]
            for r in range(P)
        ]
        locals_ = [TopKList.from_items(k, items) for items in per_node]
        out = run_cluster(P, lambda ctx: global_topk(ctx, locals_[ctx.node_id], k))
        everything = [e for items in per_node for e in items]
        expect = sorted(everything, key=lambda e: (-e[0], e[1]))[:k]
        assert out[0].entries == expect

    def test_mismatched_k_is_protocol_error(self):
        def fn(ctx):
            k = 2 + ctx.node_id
            global_topk(ctx, TopKList(k=k), k)

        with pytest.raises(ProtocolError):
            run_cluster(2, fn)


def _parity_filter_cluster(P, total, keys_by_node, seed=0):
    """Each node requests filter bits for its keys against a global parity
    table; returns per-node bit arrays plus the global truth."""
    rng = np.random.default_rng(seed)
    truth = rng.random(total) < 0.5
    layout = range_partition(total, P)

    def fn(ctx):
        first, count = layout[ctx.node_id]
        local_truth = truth[first:first + count]
        keys = np.asarray(keys_by_node[ctx.node_id], dtype=np.int64)
        per_owner, inverse = group_keys_by_owner(keys, layout)
        bits = remote_filter_request(
            ctx, per_owner, lambda rows: local_truth[rows], layout)
        return bits.bits[inverse] if keys.size else np.zeros(0, bool)

    return run_cluster(P, fn), truth


class TestRemoteFilterRequest:
    def test_p1_equals_local(self):
        out, truth = _parity_filter_cluster(1, 50, [np.arange(50)])
        assert np.array_equal(out[0], truth)

    def test_zero_keys(self):
        out, _ = _parity_filter_cluster(3, 30, [[], [], []])
        assert all(len(b) == 0 for b in out)

    @pytest.mark.parametrize("P", [2, 4, 5])
    def test_matches_global_oracle(self, P):
        rng = np.random.default_rng(P + 3)
        total = 200
        keys_by_node = [rng.integers(0, total, size=40) for _ in range(P)]
        out, truth = _parity_filter_cluster(P, total, keys_by_node, seed=P)
        for r in range(P):
            assert np.array_equal(out[r], truth[keys_by_node[r]])

    def test_key_outside_owner_range(self):
        layout = range_partition(10, 2)

        def fn(ctx):
            # node 0 claims key 9 belongs to node 0
            groups = [np.array([9]), np.array([], dtype=np.int64)] \
                if ctx.node_id == 0 else [np.array([], dtype=np.int64)] * 2
            remote_filter_request(ctx, groups, lambda rows: rows >= 0, layout)

        with pytest.raises(ProtocolError):
            run_cluster(2, fn)


class TestRemoteFilterReplicate:
    @pytest.mark.parametrize("P", [1, 2, 4, 7])
    def test_matches_oracle(self, P):
        rng = np.random.default_rng(P)
        total = 123
        truth = rng.random(total) < 0.3
        layout = range_partition(total, P)

        def fn(ctx):
            f, c = layout[ctx.node_id]
            return remote_filter_replicate(ctx, Bitset(bits=truth[f:f + c]))

        for bits in run_cluster(P, fn):
            assert np.array_equal(bits.bits, truth)

    def test_all_false(self):
        layout = range_partition(40, 4)

        def fn(ctx):
            return remote_filter_replicate(
                ctx, Bitset(layout[ctx.node_id][1]))

        for bits in run_cluster(4, fn):
            assert bits.popcount() == 0 and len(bits) == 40


class TestLazyTopKFilter:
    def _run_single(self, values, pass_keys, k, chunk, total=None):
        total = total or len(values)
        truth = np.zeros(total, dtype=bool)
        truth[list(pass_keys)] = True
        layout = range_partition(total, 1)
        candidates = sorted(
            [(v, i, None) for i, v in enumerate(values)],
            key=lambda e: (-e[0], e[1]),
        )

        def fn(ctx):
            return lazy_topk_filter(
                ctx, candidates, lambda rows: truth[rows], k, layout,
                chunk_size=chunk)

        return run_cluster(1, fn)[0]

    def test_hand_example(self):
        # keys a..f = 0..5 with values 10..5; b, d, f pass; k=2, chunk=2
        top, requested = self._run_single(
            [10, 9, 8, 7, 6, 5], pass_keys={1, 3, 5}, k=2, chunk=2)
        assert [(e[0], e[1]) for e in top.entries] == [(9, 1), (7, 3)]
        assert requested == 4

    def test_everything_passes(self):
        top, requested = self._run_single(
            list(range(20, 0, -1)), pass_keys=set(range(20)), k=5, chunk=3)
        assert requested == 6  # ceil(5/3) * 3
        assert len(top) == 5

    def test_nothing_passes(self):
        top, requested = self._run_single(
            list(range(10, 0, -1)), pass_keys=set(), k=3, chunk=4)
        assert requested == 10
        assert len(top) == 0

    @pytest.mark.parametrize("P", [2, 4])
    @pytest.mark.parametrize("recheck", [None, 2])
    def test_multinode_matches_eager_oracle(self, P, recheck):
        rng = np.random.default_rng(P)
        total = 120
        truth = rng.random(total) < 0.4
        layout = range_partition(total, P)
        k = 6
        per_node = []
        for r in range(P):
            vals = rng.integers(0, 10_000, size=30)
            keys = rng.choice(total, size=30, replace=False)
            per_node.append(sorted(
                [(int(v), int(g), None) for v, g in zip(vals, keys)],
                key=lambda e: (-e[0], e[1]),
            ))

        def fn(ctx):
            f, c = layout[ctx.node_id]
            local_truth = truth[f:f + c]
            top, req = lazy_topk_filter(
                ctx, per_node[ctx.node_id], lambda rows: local_truth[rows],
                k, layout, chunk_size=4, recheck_every=recheck)
            assert req <= len(per_node[ctx.node_id])  # never beyond eager
            return global_topk(ctx, top, k)

        out = run_cluster(P, fn)
        passing = [
            e for items in per_node for e in items if truth[e[1]]
        ]
        expect = sorted(passing, key=lambda e: (-e[0], e[1]))[:k]
        assert out[0].entries == expect


class TestEncodePartialSums:
    def test_hand_example(self):
        enc = encode_partial_sums([12, 5], m_bits=3, group_size=2)
        assert list(enc.offsets) == [3]
        assert list(enc.codes) == [6, 2]
        assert list(enc.lower()) == [12, 4]
        assert list(enc.upper()) == [13, 5]

    def test_all_zero_group(self):
        enc = encode_partial_sums([0, 0, 0], m_bits=4, group_size=8)
        assert list(enc.offsets) == [-1]
        assert list(enc.lower()) == [0, 0, 0]
        assert list(enc.upper()) == [0, 0, 0]

    def test_wide_window_is_exact(self):
        vals = [0, 1, 7, 130, 255]
        enc = encode_partial_sums(vals, m_bits=8, group_size=8)
        assert list(enc.lower()) == vals
        assert list(enc.upper()) == vals

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            encode_partial_sums([-1], m_bits=4)

    @pytest.mark.parametrize("m_bits", [1, 4, 8])
    def test_bounds_sound_exhaustive_u16(self, m_bits):
        v = np.arange(1 << 16, dtype=np.int64)
        # each value alone in its group
        enc = encode_partial_sums(v, m_bits=m_bits, group_size=1)
        assert (enc.lower() <= v).all() and (v <= enc.upper()).all()
        # paired with a group max of 2^15
        paired = np.empty(2 * len(v), dtype=np.int64)
        paired[0::2] = v
        paired[1::2] = 1 << 15
        enc = encode_partial_sums(paired, m_bits=m_bits, group_size=2)
        lo, up = enc.lower(), enc.upper()
        assert (lo[0::2] <= v).all() and (v <= up[0::2]).all()

    def test_wire_roundtrip(self):
        rng = np.random.default_rng(5)
        vals = rng.integers(0, 1 << 40, size=700)
        enc = encode_partial_sums(vals, m_bits=8, group_size=256)
        back, pos = do.EncodedPartialSums.from_bytes(enc.to_bytes(), len(vals))
        assert pos == len(enc.to_bytes())
        assert back.m_bits == 8 and back.group_size == 256
        assert np.array_equal(back.offsets, enc.offsets)
        assert np.array_equal(back.codes, enc.codes)

    def test_code_bytes(self):
        enc = encode_partial_sums(np.arange(100), m_bits=8, group_size=64)
        assert enc.code_bytes() == 64 + 36


def _random_aggregation(rng, K, P, style="uniform"):
    layout = range_partition(K, P)
    partials = []
    for _ in range(P):
        if style == "uniform":
            p = rng.integers(0, 1 << 30, size=K)
        else:  # sum of uniforms, occasionally sparse
            p = sum(rng.integers(0, 1 << 16, size=K) for _ in range(4))
        p[rng.random(K) < 0.3] = 0
        partials.append(p.astype(np.int64))
    return [Aggregation(p, layout) for p in partials]


def _oracle_topk(aggs, k):
    totals = np.sum([a.partial for a in aggs], axis=0)
    items = [(int(v), int(i), None) for i, v in enumerate(totals)]
    return sorted(items, key=lambda e: (-e[0], e[1]))[:k]


class TestTopKSum:
    def test_p1_shortcut(self):
        agg = Aggregation(np.array([5, 0, 9, 9, 1]), range_partition(5, 1))
        out = run_cluster(1, lambda ctx: approx_topk_sum(ctx, agg, 2))
        top, stats = out[0]
        assert [(e[0], e[1]) for e in top.entries] == [(9, 2), (9, 3)]
        assert stats.phase5_payload_bytes == 0

    @pytest.mark.parametrize("P", [2, 4, 8])
    @pytest.mark.parametrize("style", ["uniform", "sums"])
    def test_approx_equals_naive_and_oracle(self, P, style):
        rng = np.random.default_rng(P * 17 + (style == "sums"))
        for K in (10, 257, 1500):
            aggs = _random_aggregation(rng, K, P, style)
            k = min(K, 7)
            a = run_cluster(P, lambda ctx: approx_topk_sum(
                ctx, aggs[ctx.node_id], k, m_bits=8, group_size=64))
            n = run_cluster(P, lambda ctx: naive_topk_sum(
                ctx, aggs[ctx.node_id], k))
            expect = _oracle_topk(aggs, k)
            assert a[0][0].entries == expect
            assert n[0][0].entries == expect

    def test_all_equal_sums_no_pruning(self):
        P, K = 4, 64
        layout = range_partition(K, P)
        aggs = [Aggregation(np.full(K, 1000, dtype=np.int64), layout)
                for _ in range(P)]
        out = run_cluster(P, lambda ctx: approx_topk_sum(
            ctx, aggs[ctx.node_id], 5, m_bits=4, group_size=8))
        top, _ = out[0]
        assert [(e[0], e[1]) for e in top.entries] == [
            (4000, i, None)[:2] for i in range(5)]
        for r in range(P):
            assert out[r][1].pruned_keys == 0

    def test_naive_value_volume(self):
        P, K = 3, 50
        rng = np.random.default_rng(2)
        aggs = _random_aggregation(rng, K, P)
        out = run_cluster(P, lambda ctx: naive_topk_sum(
            ctx, aggs[ctx.node_id], 5, use_1factor=False))
        for r in range(P):
            nonzero = int((aggs[r].partial != 0).sum())
            assert out[r][1].phase1_value_bytes == 8 * nonzero
            assert out[r][1].phase1_entries == nonzero

    def test_approx_code_volume_is_one_byte_per_entry(self):
        P, K = 4, 512
        rng = np.random.default_rng(9)
        aggs = _random_aggregation(rng, K, P)
        out = run_cluster(P, lambda ctx: approx_topk_sum(
            ctx, aggs[ctx.node_id], 5, m_bits=8, group_size=1024))
        for r in range(P):
            stats = out[r][1]
            # 8-bit codes: exactly one byte per transmitted partial sum
            assert stats.phase1_value_bytes == stats.phase1_entries

    @pytest.mark.parametrize("P", [2, 4])
    def test_pruning_never_drops_oracle_keys(self, P):
        rng = np.random.default_rng(P + 40)
        aggs = _random_aggregation(rng, 300, P)
        k = 10
        expect_keys = {e[1] for e in _oracle_topk(aggs, k)}
        layout = aggs[0].key_layout

        def fn(ctx):
            top, stats = approx_topk_sum(ctx, aggs[ctx.node_id], k,
                                         m_bits=4, group_size=16)
            f, c = layout[ctx.node_id]
            return top, stats, f, c

        out = run_cluster(P, fn)
        top = out[0][0]
        assert {e[1] for e in top.entries} == expect_keys


class TestLateMaterialize:
    def _table(self, total):
        return np.array([f"row-{i}" for i in range(total)], dtype=object)

    @pytest.mark.parametrize("P", [1, 2, 4])
    def test_matches_direct_lookup(self, P):
        total = 57
        data = self._table(total)
        layout = range_partition(total, P)
        rng = np.random.default_rng(P)
        wanted = rng.integers(0, total, size=23)  # repeats, unordered

        def fn(ctx):
            f, c = layout[ctx.node_id]
            local = data[f:f + c]
            return late_materialize(
                ctx, wanted if ctx.node_id == 0 else None,
                lambda rows: list(local[rows]), layout)

        out = run_cluster(P, fn)
        assert out[0] == list(data[wanted])
        assert all(r is None for r in out[1:])

    def test_zero_keys(self):
        layout = range_partition(10, 2)
        out = run_cluster(2, lambda ctx: late_materialize(
            ctx, [] if ctx.node_id == 0 else None,
            lambda rows: [], layout))
        assert out[0] == []

    def test_unknown_key(self):
        layout = range_partition(10, 2)
        with pytest.raises(ProtocolError):
            run_cluster(2, lambda ctx: late_materialize(
                ctx, [10] if ctx.node_id == 0 else None,
                lambda rows: [], layout))


class TestLazyRequestBudget:
    def test_mean_requests_within_4k_over_p(self):
        # pass probability p: lazy filtering should request about k/p keys
        rng = np.random.default_rng(0)
        k = 8
        for p in (0.1, 0.5):
            counts = []
            for _ in range(100):
                total = 600
                truth = rng.random(total) < p
                layout = range_partition(total, 1)
                vals = rng.integers(0, 1 << 20, size=total)
                candidates = sorted(
                    [(int(v), int(i), None) for i, v in enumerate(vals)],
                    key=lambda e: (-e[0], e[1]),
                )

                def fn(ctx):
                    return lazy_topk_filter(
                        ctx, candidates, lambda rows: truth[rows], k, layout,
                        chunk_size=k)

                counts.append(run_cluster(1, fn)[0][1])
            assert np.mean(counts) <= 4 * k / p
