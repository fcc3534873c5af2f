"""Key-based routing on a 64-bit ring.

Every key belongs to the live node at the smallest circular (bidirectional)
distance, ties going to the numerically smaller id. Each node knows a leaf
set of ``leaf_size`` neighbours on both sides plus fingers at exponentially
spaced distances in both directions; routing greedily forwards to the known
node closest to the key. Because every node knows its immediate neighbours,
a greedy route that cannot improve any further has reached the owner.
"""
from __future__ import annotations

import bisect
import hashlib
from typing import Callable, Iterable, Sequence

RING_BITS = 64
RING = 1 << RING_BITS
MASK = RING - 1


def ring_distance(a: int, b: int) -> int:
    d = (a - b) & MASK
    return min(d, RING - d)


def closer(a: int, b: int, key: int) -> bool:
    """True when ``a`` is strictly preferred over ``b`` as owner of ``key``."""
    da, db = ring_distance(a, key), ring_distance(b, key)
    return da < db or (da == db and a < b)


def hash_key(data: bytes | str) -> int:
    if isinstance(data, str):
        data = data.encode()
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "big")


class RoutingTable:
    __slots__ = ("node", "successors", "predecessors", "fingers", "known")

    def __init__(self, node: int, successors, predecessors, fingers):
        self.node = node
        self.successors = tuple(successors)
        self.predecessors = tuple(predecessors)
        self.fingers = tuple(fingers)
        self.known = tuple(sorted(set(self.successors) | set(self.predecessors) | set(self.fingers)))


class Overlay:
    """Static overlay membership with precomputed routing tables."""

    def __init__(self, node_ids: Iterable[int], leaf_size: int = 4):
        ids = sorted(set(int(n) & MASK for n in node_ids))
        if not ids:
            raise ValueError("overlay needs at least one node")
        if leaf_size < 1:
            raise ValueError("leaf_size must be >= 1")
        self.ids = ids
        self.leaf_size = leaf_size
        self.tables = {n: self._build(i) for i, n in enumerate(ids)}
        self._hops: dict[tuple[int, int], int | None] = {}

    def __len__(self):
        return len(self.ids)

    def __contains__(self, node: int) -> bool:
        return node in self.tables

    def _successor(self, point: int) -> int:
        i = bisect.bisect_left(self.ids, point & MASK)
        return self.ids[i % len(self.ids)]

    def _predecessor(self, point: int) -> int:
        i = bisect.bisect_right(self.ids, point & MASK) - 1
        return self.ids[i % len(self.ids)]

    def _build(self, i: int) -> RoutingTable:
        n = len(self.ids)
        node = self.ids[i]
        k = min(self.leaf_size, n - 1)
        succ = [self.ids[(i + j) % n] for j in range(1, k + 1)]
        pred = [self.ids[(i - j) % n] for j in range(1, k + 1)]
        fingers = set()
        for b in range(RING_BITS):
            fingers.add(self._successor(node + (1 << b)))
            fingers.add(self._predecessor(node - (1 << b)))
        fingers.discard(node)
        return RoutingTable(node, succ, pred, sorted(fingers))

    def owner(self, key: int) -> int:
        """Live node closest to ``key`` (ties to the smaller id)."""
        key &= MASK
        s = self._successor(key)
        p = self._predecessor(key)
        return p if closer(p, s, key) else s

    def next_hop(self, node: int, key: int) -> int | None:
        """Known node strictly closer to ``key`` than ``node``; None if ``node`` owns it."""
        key &= MASK
        try:
            return self._hops[node, key]
        except KeyError:
            pass
        best = node
        for cand in self.tables[node].known:
            if closer(cand, best, key):
                best = cand
        hop = None if best == node else best
        if len(self._hops) < 1 << 16:
            self._hops[node, key] = hop
        return hop

    def path(self, start: int, key: int) -> list[int]:
        """Nodes visited from ``start`` to the owner of ``key``, both included."""
        hops = [start]
        node = start
        while True:
            nxt = self.next_hop(node, key)
            if nxt is None:
                return hops
            hops.append(nxt)
            node = nxt
            if len(hops) > len(self.ids) + 1:
                raise RuntimeError("routing loop")  # unreachable: distance strictly decreases

    def route(
        self,
        start: int,
        key: int,
        msg,
        deliver: Callable[[int, object], None] | None = None,
        per_hop: Callable[[int, object], object] | None = None,
    ) -> list[int]:
        """Synchronous routing helper.

        ``per_hop`` runs on every intermediate node in path order and may
        return False to stop the message there; ``deliver`` runs at the owner.
        """
        hops = self.path(start, key)
        for node in hops[1:-1]:
            if per_hop is not None and per_hop(node, msg) is False:
                return hops[: hops.index(node) + 1]
        if deliver is not None:
            deliver(hops[-1], msg)
        return hops

    def neighbours(self, node: int) -> Sequence[int]:
        return self.tables[node].known
