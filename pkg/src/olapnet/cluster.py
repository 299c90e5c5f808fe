"""Simulated shared-nothing cluster: P logical nodes on threads, a channel
mesh transport, and the collective operations used by the query plans.

Every collective starts with a rendezvous that also validates that all
nodes entered with a compatible signature (same operation, root, k, ...);
a mismatch raises ProtocolError on every node instead of deadlocking.
Payloads are opaque byte strings; typed layers serialize above this module.
"""

from __future__ import annotations

import queue
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable

from .codec import decode_varint, encode_varint
from .errors import ClusterAborted, ProtocolError

_POLL = 0.1  # seconds between abort-flag checks while blocked


@dataclass
class CommStats:
    bytes_sent: int = 0
    bytes_received: int = 0
    # (operation name, payload bytes entering the wire, logical rounds)
    per_collective: list = field(default_factory=list)
    comm_seconds: float = 0.0
    rows_scanned: int = 0
    phase_bytes: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def add_extra(self, key, amount):
        self.extra[key] = self.extra.get(key, 0) + amount


@dataclass(frozen=True)
class ReduceOperator:
    """Associative combiner over opaque byte payloads."""

    combine: Callable[[bytes, bytes], bytes]
    identity: bytes | None = None


class Transport:
    """In-process channel mesh between the node threads."""

    def __init__(self, P: int):
        self.P = P
        self._queues = {
            (s, d): queue.SimpleQueue() for s in range(P) for d in range(P)
        }
        self._abort = threading.Event()
        self._sigs: list = [None] * P
        self._sig_error: list = [None]
        self._barrier = threading.Barrier(P, action=self._check_sigs)

    def abort(self) -> None:
        self._abort.set()
        self._barrier.abort()

    @property
    def aborted(self) -> bool:
        return self._abort.is_set()

    def _check_sigs(self) -> None:
        sigs = set(self._sigs)
        if len(sigs) > 1:
            self._sig_error[0] = ProtocolError(
                f"collective entered with mismatched signatures: {sorted(map(str, sigs))}"
            )
        else:
            self._sig_error[0] = None
        self._sigs = [None] * self.P

    def rendezvous(self, node_id: int, signature) -> None:
        if self._abort.is_set():
            raise ClusterAborted("cluster aborted")
        self._sigs[node_id] = signature
        try:
            self._barrier.wait()
        except threading.BrokenBarrierError:
            raise ClusterAborted("cluster aborted during collective entry")
        err = self._sig_error[0]
        if err is not None:
            raise err

    def send(self, src: int, dst: int, payload: bytes) -> None:
        self._queues[(src, dst)].put(payload)

    def recv(self, dst: int, src: int) -> bytes:
        q = self._queues[(src, dst)]
        while True:
            try:
                return q.get(timeout=_POLL)
            except queue.Empty:
                if self._abort.is_set():
                    raise ClusterAborted("cluster aborted while receiving")


class ClusterCtx:
    """Handle for one logical node; owned by exactly one node thread."""

    def __init__(self, node_id: int, P: int, transport: Transport):
        self.node_id = node_id
        self.P = P
        self.transport = transport
        self.stats = CommStats()
        self._phase: str | None = None

    @contextmanager
    def phase(self, name: str):
        prev, self._phase = self._phase, name
        try:
            yield
        finally:
            self._phase = prev

    def _count(self, n: int, sent: bool) -> None:
        if sent:
            self.stats.bytes_sent += n
        else:
            self.stats.bytes_received += n
        if self._phase is not None and sent:
            self.stats.phase_bytes[self._phase] = (
                self.stats.phase_bytes.get(self._phase, 0) + n
            )

    def _send(self, dst: int, payload: bytes) -> None:
        self.transport.send(self.node_id, dst, payload)
        self._count(len(payload), sent=True)

    def _recv(self, src: int) -> bytes:
        payload = self.transport.recv(self.node_id, src)
        self._count(len(payload), sent=False)
        return payload


def _enter(ctx: ClusterCtx, name: str, signature=()) -> float:
    ctx.transport.rendezvous(ctx.node_id, (name,) + tuple(signature))
    return time.perf_counter()

def _leave(ctx: ClusterCtx, name: str, payload_bytes: int, rounds: int, t0: float) -> None:
    ctx.stats.comm_seconds += time.perf_counter() - t0
    ctx.stats.per_collective.append((name, payload_bytes, rounds))


# ---------------------------------------------------------------------------
# collectives

def barrier(ctx: ClusterCtx) -> None:
    t0 = _enter(ctx, "barrier")
    _leave(ctx, "barrier", 0, 1, t0)


def gather(ctx: ClusterCtx, payload: bytes, root: int) -> list[bytes] | None:
    t0 = _enter(ctx, "gather", (root,))
    sent = 0
    if ctx.node_id == root:
        out = []
        for s in range(ctx.P):
            out.append(payload if s == root else ctx._recv(s))
        _leave(ctx, "gather", sent, 1, t0)
        return out
    ctx._send(root, payload)
    _leave(ctx, "gather", len(payload), 1, t0)
    return None


def scatter(ctx: ClusterCtx, root: int, payloads: list[bytes] | None) -> bytes:
    t0 = _enter(ctx, "scatter", (root,))
    if ctx.node_id == root:
        if payloads is None or len(payloads) != ctx.P:
            ctx.transport.abort()
            raise ValueError("scatter requires one payload per node at root")
        for d in range(ctx.P):
            if d != root:
                ctx._send(d, payloads[d])
        _leave(ctx, "scatter", sum(map(len, payloads)), 1, t0)
        return payloads[root]
    got = ctx._recv(root)
    _leave(ctx, "scatter", 0, 1, t0)
    return got


def broadcast(ctx: ClusterCtx, payload: bytes | None, root: int) -> bytes:
    """Binomial-tree broadcast; internal helper for allgather/allreduce."""
    t0 = _enter(ctx, "broadcast", (root,))
    rel = (ctx.node_id - root) % ctx.P
    rounds = _log2_ceil(ctx.P)
    mask = 1 << max(rounds - 1, 0)
    # Receive once from the appropriate parent, then fan out.
    if rel != 0:
        peer_mask = 1
        while not rel & peer_mask:
            peer_mask <<= 1
        parent = (rel - peer_mask + root) % ctx.P
        payload = ctx._recv(parent)
        mask = peer_mask >> 1
    while mask:
        child = rel | mask
        if child != rel and child < ctx.P:
            ctx._send((child + root) % ctx.P, payload)
        mask >>= 1
    _leave(ctx, "broadcast", len(payload), rounds, t0)
    return payload


def _pack_list(parts: list[bytes]) -> bytes:
    out = bytearray(encode_varint(len(parts)))
    for p in parts:
        out += encode_varint(len(p))
        out += p
    return bytes(out)


def _unpack_list(buf: bytes) -> list[bytes]:
    n, pos = decode_varint(buf, 0)
    out = []
    for _ in range(n):
        ln, pos = decode_varint(buf, pos)
        out.append(bytes(buf[pos:pos + ln]))
        pos += ln
    return out


def allgather(ctx: ClusterCtx, payload: bytes) -> list[bytes]:
    """Gather to node 0, then broadcast the concatenation."""
    parts = gather(ctx, payload, 0)
    packed = _pack_list(parts) if ctx.node_id == 0 else None
    return _unpack_list(broadcast(ctx, packed, 0))


def all_to_all_1factor(ctx: ClusterCtx, payloads: list[bytes]) -> list[bytes]:
    """Personalized all-to-all in P pairing rounds.

    In round i node u talks to v = (i - u) mod P; the schedule meets every
    unordered pair exactly once, and a node paired with itself delivers its
    own buffer locally.
    """
    if len(payloads) != ctx.P:
        raise ValueError(f"need {ctx.P} payloads, got {len(payloads)}")
    t0 = _enter(ctx, "all_to_all_1factor")
    u, P = ctx.node_id, ctx.P
    received: list[bytes | None] = [None] * P
    sent = 0
    for i in range(P):
        v = (i - u) % P
        if v == u:
            received[u] = payloads[u]
        else:
            ctx._send(v, payloads[v])
            sent += len(payloads[v])
            received[v] = ctx._recv(v)
    _leave(ctx, "all_to_all_1factor", sent, P, t0)
    return received  # type: ignore[return-value]


def one_factor_schedule(P: int) -> list[list[int]]:
    """Partner of every node per round; partner == self means idle/self."""
    return [[(i - u) % P for u in range(P)] for i in range(P)]


def all_to_all_naive(ctx: ClusterCtx, payloads: list[bytes]) -> list[bytes]:
    """Library-style exchange: blast all sends, then receive in node order."""
    if len(payloads) != ctx.P:
        raise ValueError(f"need {ctx.P} payloads, got {len(payloads)}")
    t0 = _enter(ctx, "all_to_all_naive")
    u = ctx.node_id
    sent = 0
    for d in range(ctx.P):
        if d != u:
            ctx._send(d, payloads[d])
            sent += len(payloads[d])
    received = [
        payloads[u] if s == u else ctx._recv(s) for s in range(ctx.P)
    ]
    _leave(ctx, "all_to_all_naive", sent, 1, t0)
    return received


def _log2_ceil(P: int) -> int:
    return (P - 1).bit_length()


def reduce(ctx: ClusterCtx, payload: bytes, op: ReduceOperator, root: int) -> bytes | None:
    """Binomial-tree reduction; ceil(log2 P) combine depths."""
    t0 = _enter(ctx, "reduce", (root,))
    rel = (ctx.node_id - root) % ctx.P
    acc = payload
    sent = 0
    step = 1
    while step < ctx.P:
        if rel & step:
            ctx._send((rel - step + root) % ctx.P, acc)
            sent += len(acc)
            acc = None
            break
        if rel + step < ctx.P:
            other = ctx._recv((rel + step + root) % ctx.P)
            acc = op.combine(acc, other)
        step <<= 1
    _leave(ctx, "reduce", sent, _log2_ceil(ctx.P), t0)
    return acc if ctx.node_id == root else None


def allreduce(ctx: ClusterCtx, payload: bytes, op: ReduceOperator) -> bytes:
    acc = reduce(ctx, payload, op, 0)
    return broadcast(ctx, acc, 0)


# ---------------------------------------------------------------------------
# runner

def run_cluster(P: int, fn: Callable, node_args=None, timeout: float | None = None):
    """Run ``fn(ctx, *args)`` on P node threads; returns per-node results.

    The first failing node aborts the whole cluster and its exception is
    re-raised in the caller.
    """
    transport = Transport(P)
    results = [None] * P
    errors: list = [None] * P

    def runner(node_id: int):
        ctx = ClusterCtx(node_id, P, transport)
        args = node_args[node_id] if node_args is not None else ()
        try:
            results[node_id] = fn(ctx, *args)
        except ClusterAborted as e:
            errors[node_id] = e
        except BaseException as e:  # noqa: BLE001 - propagated to caller
            errors[node_id] = e
            transport.abort()

    threads = [
        threading.Thread(target=runner, args=(u,), name=f"node-{u}", daemon=True)
        for u in range(P)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout)
        if t.is_alive():
            transport.abort()
            t.join(5.0)
    for e in errors:
        if e is not None and not isinstance(e, ClusterAborted):
            raise e
    for e in errors:
        if e is not None:
            raise e
    return results
