"""Compression primitives for communicated key sets and bitsets.

Wire header bytes: 0 = raw bitset, 1 = sparse set positions,
2 = pass-through bytes, 3 = compressed bytes.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .errors import DecodeError

HDR_RAW_BITSET = 0
HDR_SPARSE_BITSET = 1
HDR_PASSTHROUGH = 2
HDR_COMPRESSED = 3


# ---------------------------------------------------------------------------
# varint / delta coding

def encode_varint(n: int) -> bytes:
    """LEB128-style: 7 data bits per byte, high bit set means more follow."""
    if n < 0:
        raise ValueError("varint requires a non-negative integer")
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def decode_varint(buf: bytes, pos: int) -> tuple[int, int]:
    """Decode one varint starting at ``pos``; returns (value, next_pos)."""
    n = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise DecodeError("truncated varint")
        b = buf[pos]
        pos += 1
        n |= (b & 0x7F) << shift
        if not b & 0x80:
            return n, pos
        shift += 7


@dataclass(frozen=True)
class VarIntBlock:
    """A delta+varint encoded strictly increasing integer sequence."""

    data: bytes
    count: int

    def to_bytes(self) -> bytes:
        return encode_varint(self.count) + self.data

    @staticmethod
    def from_bytes(buf: bytes, pos: int = 0) -> tuple["VarIntBlock", int]:
        count, pos = decode_varint(buf, pos)
        # Walk the stream to find where this block ends.
        start = pos
        for _ in range(count):
            _, pos = decode_varint(buf, pos)
        return VarIntBlock(data=bytes(buf[start:pos]), count=count), pos


def delta_varint_encode(ids) -> VarIntBlock:
    """Encode a strictly increasing sequence of non-negative integers.

    The first value is stored raw, then the gaps to each successor.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        return VarIntBlock(data=b"", count=0)
    if ids[0] < 0:
        raise ValueError("ids must be non-negative")
    deltas = np.diff(ids)
    if ids.size > 1 and deltas.min() <= 0:
        raise ValueError("ids must be strictly increasing")
    out = bytearray(encode_varint(int(ids[0])))
    for d in deltas.tolist():
        out += encode_varint(d)
    return VarIntBlock(data=bytes(out), count=int(ids.size))


def delta_varint_decode(block: VarIntBlock) -> np.ndarray:
    """Inverse of :func:`delta_varint_encode`."""
    out = np.empty(block.count, dtype=np.int64)
    pos = 0
    prev = 0
    for i in range(block.count):
        v, pos = decode_varint(block.data, pos)
        prev = prev + v if i else v
        out[i] = prev
    if pos != len(block.data):
        raise DecodeError("trailing bytes after varint block")
    return out


# ---------------------------------------------------------------------------
# bitsets

class Bitset:
    """Dense bit vector. Out-of-range tests raise rather than return False."""

    __slots__ = ("bits",)

    def __init__(self, length: int = 0, bits: np.ndarray | None = None):
        if bits is not None:
            self.bits = np.asarray(bits, dtype=bool)
        else:
            self.bits = np.zeros(length, dtype=bool)

    @classmethod
    def from_indices(cls, length: int, indices) -> "Bitset":
        b = cls(length)
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size:
            if idx.min() < 0 or idx.max() >= length:
                raise IndexError("bit index out of range")
            b.bits[idx] = True
        return b

    def __len__(self) -> int:
        return len(self.bits)

    def get(self, i: int) -> bool:
        if not 0 <= i < len(self.bits):
            raise IndexError(f"bit {i} out of range [0,{len(self.bits)})")
        return bool(self.bits[i])

    def set(self, i: int, value: bool = True) -> None:
        if not 0 <= i < len(self.bits):
            raise IndexError(f"bit {i} out of range [0,{len(self.bits)})")
        self.bits[i] = value

    def popcount(self) -> int:
        return int(self.bits.sum())

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    def __eq__(self, other) -> bool:
        return isinstance(other, Bitset) and np.array_equal(self.bits, other.bits)

    def __repr__(self) -> str:
        return f"Bitset(len={len(self)}, popcount={self.popcount()})"

    @staticmethod
    def concat(parts: list["Bitset"]) -> "Bitset":
        if not parts:
            return Bitset(0)
        return Bitset(bits=np.concatenate([p.bits for p in parts]))


def bitset_encode(b: Bitset) -> bytes:
    """Self-describing encoding: whichever of raw bits / sparse positions
    is smaller."""
    raw = np.packbits(b.bits).tobytes()
    sparse = delta_varint_encode(b.indices()).to_bytes()
    if len(sparse) < len(raw):
        return bytes([HDR_SPARSE_BITSET]) + encode_varint(len(b)) + sparse
    return bytes([HDR_RAW_BITSET]) + encode_varint(len(b)) + raw


def bitset_decode(buf: bytes) -> Bitset:
    if not buf:
        raise DecodeError("empty bitset encoding")
    hdr = buf[0]
    length, pos = decode_varint(buf, 1)
    if hdr == HDR_RAW_BITSET:
        nbytes = (length + 7) // 8
        if len(buf) - pos < nbytes:
            raise DecodeError("truncated raw bitset")
        bits = np.unpackbits(
            np.frombuffer(buf, dtype=np.uint8, count=nbytes, offset=pos)
        )[:length].astype(bool)
        return Bitset(bits=bits)
    if hdr == HDR_SPARSE_BITSET:
        block, _ = VarIntBlock.from_bytes(buf, pos)
        return Bitset.from_indices(length, delta_varint_decode(block))
    raise DecodeError(f"unknown bitset header {hdr}")


# ---------------------------------------------------------------------------
# generic byte compressor

class ByteCompressor:
    """Pluggable lossless byte compressor."""

    header: int

    def compress(self, data: bytes) -> bytes:
        raise NotImplementedError

    def decompress(self, data: bytes) -> bytes:
        raise NotImplementedError


class PassThrough(ByteCompressor):
    header = HDR_PASSTHROUGH

    def compress(self, data: bytes) -> bytes:
        return data

    def decompress(self, data: bytes) -> bytes:
        return data


class Zlib(ByteCompressor):
    header = HDR_COMPRESSED

    def __init__(self, level: int = 1):
        self.level = level

    def compress(self, data: bytes) -> bytes:
        return zlib.compress(data, self.level)

    def decompress(self, data: bytes) -> bytes:
        try:
            return zlib.decompress(data)
        except zlib.error as e:
            raise DecodeError(f"corrupt compressed stream: {e}") from e


DEFAULT_COMPRESSOR = PassThrough()


def generic_compress(data: bytes, codec: ByteCompressor | None = None) -> bytes:
    codec = codec or DEFAULT_COMPRESSOR
    return bytes([codec.header]) + codec.compress(data)


def generic_decompress(buf: bytes) -> bytes:
    if not buf:
        raise DecodeError("empty compressed payload")
    hdr = buf[0]
    if hdr == HDR_PASSTHROUGH:
        return bytes(buf[1:])
    if hdr == HDR_COMPRESSED:
        return Zlib().decompress(bytes(buf[1:]))
    raise DecodeError(f"unknown compressor header {hdr}")
