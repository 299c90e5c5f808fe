import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from olapnet import codec
from olapnet.codec import (
    Bitset,
    VarIntBlock,
    bitset_decode,
    bitset_encode,
    delta_varint_decode,
    delta_varint_encode,
    generic_compress,
    generic_decompress,
)
from olapnet.errors import DecodeError


class TestDeltaVarint:
    def test_empty(self):
        block = delta_varint_encode([])
        assert block.count == 0
        assert block.data == b""
        assert list(delta_varint_decode(block)) == []

    def test_stored_deltas(self):
        # [3,5,9] -> first raw, then gaps [2,4]; all fit one byte each
        block = delta_varint_encode([3, 5, 9])
        assert block.data == bytes([3, 2, 4])
        assert list(delta_varint_decode(block)) == [3, 5, 9]

    def test_non_increasing_rejected(self):
        with pytest.raises(ValueError):
            delta_varint_encode([3, 3])
        with pytest.raises(ValueError):
            delta_varint_encode([5, 2])
        with pytest.raises(ValueError):
            delta_varint_encode([-1, 2])

    def test_truncated_stream(self):
        block = delta_varint_encode([1000, 2000])
        with pytest.raises(DecodeError):
            delta_varint_decode(VarIntBlock(data=block.data[:-1], count=2))

    @given(st.sets(st.integers(min_value=0, max_value=2**40), max_size=200))
    @settings(max_examples=200, deadline=None)
    def test_roundtrip(self, ids):
        ids = sorted(ids)
        got = delta_varint_decode(delta_varint_encode(ids))
        assert list(got) == ids

    def test_block_framing_roundtrip(self):
        ids = [0, 7, 300, 301, 99999]
        buf = delta_varint_encode(ids).to_bytes() + b"tail"
        block, pos = VarIntBlock.from_bytes(buf, 0)
        assert list(delta_varint_decode(block)) == ids
        assert buf[pos:] == b"tail"

    def test_size_envelope(self):
        # n sorted ids drawn uniformly from [0, U): average encoded size
        # stays under n*(ceil(log2(U/n))/7 + 2) bytes.
        rng = np.random.default_rng(7)
        n, U = 500, 1 << 20
        sizes = []
        for _ in range(100):
            ids = np.sort(rng.choice(U, size=n, replace=False))
            sizes.append(len(delta_varint_encode(ids).data))
        bound = n * (np.ceil(np.log2(U / n)) / 7 + 2)
        assert np.mean(sizes) <= bound


class TestBitset:
    def test_out_of_range_get_is_error(self):
        b = Bitset(8)
        with pytest.raises(IndexError):
            b.get(8)
        with pytest.raises(IndexError):
            b.get(-1)

    def test_all_zero_sparse(self):
        enc = bitset_encode(Bitset(1024))
        assert len(enc) <= 4
        assert bitset_decode(enc) == Bitset(1024)

    def test_dense_raw(self):
        rng = np.random.default_rng(3)
        b = Bitset(bits=rng.random(1024) < 0.5)
        enc = bitset_encode(b)
        assert enc[0] == codec.HDR_RAW_BITSET
        assert len(enc) == 1 + 2 + 128  # header + varint(1024) + raw bits
        assert bitset_decode(enc) == b

    @given(
        st.integers(min_value=0, max_value=300),
        st.floats(min_value=0.0, max_value=1.0),
        st.integers(min_value=0, max_value=2**32),
    )
    @settings(max_examples=200, deadline=None)
    def test_roundtrip(self, length, density, seed):
        rng = np.random.default_rng(seed)
        b = Bitset(bits=rng.random(length) < density)
        assert bitset_decode(bitset_encode(b)) == b

    def test_encoder_picks_smaller(self):
        sparse = Bitset.from_indices(4096, [17])
        assert bitset_encode(sparse)[0] == codec.HDR_SPARSE_BITSET
        dense = Bitset(bits=np.ones(4096, dtype=bool))
        # all-ones: positions cost ~1 byte each, raw costs 512
        assert bitset_encode(dense)[0] == codec.HDR_RAW_BITSET


class TestGenericCompress:
    def test_empty(self):
        assert generic_decompress(generic_compress(b"")) == b""

    def test_passthrough_is_identity(self):
        data = b"hello world"
        assert generic_compress(data)[1:] == data

    @given(st.binary(max_size=500))
    @settings(max_examples=100, deadline=None)
    def test_roundtrip_both_codecs(self, data):
        assert generic_decompress(generic_compress(data)) == data
        z = generic_compress(data, codec.Zlib())
        assert generic_decompress(z) == data

    def test_corrupt_input(self):
        good = generic_compress(b"x" * 100, codec.Zlib())
        with pytest.raises(DecodeError):
            generic_decompress(good[:1] + b"\xff\xff")
