"""Replies travelling back towards event sources, and the local event buffer.

Every link a data message crosses ORs the link's Bloom filter into the
message's z-filter; aggregation ORs the z-filters of everything it merges.
A reply carrying that z-filter is forwarded from a node to each upstream
neighbour whose link filter is fully contained in it. z-filters are plain
ints used as ``m``-bit masks.
"""
from __future__ import annotations

import hashlib
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .aggregation import Constraint, filter_accepts
from .events import EventRecord, FlowKeySchema, Meta, Template

DEFAULT_M = 256
DEFAULT_K = 4
DEFAULT_LTS_CAPACITY = 4096
DEFAULT_TTL_MULTIPLE = 8


def popcount(z: int) -> int:
    return bin(z).count("1")


def contains(z: int, link_filter: int) -> bool:
    return z & link_filter == link_filter


class LinkFilters:
    """Seeded ``k``-of-``m`` link identifiers, cached per directed link."""

    def __init__(self, m: int = DEFAULT_M, k: int = DEFAULT_K, seed: int = 0):
        if not 0 < k <= m:
            raise ValueError("need 0 < k <= m")
        self.m = m
        self.k = k
        self.seed = seed
        self._cache: dict[tuple[int, int], int] = {}

    def __call__(self, upstream: int, downstream: int) -> int:
        key = (upstream, downstream)
        lf = self._cache.get(key)
        if lf is None:
            lf = self._cache[key] = self._make(upstream, downstream)
        return lf

    def positions(self, upstream: int, downstream: int) -> list[int]:
        lf = self(upstream, downstream)
        return [i for i in range(self.m) if lf >> i & 1]

    def _make(self, upstream: int, downstream: int) -> int:
        bits: set[int] = set()
        counter = 0
        while len(bits) < self.k:
            h = hashlib.blake2b(
                f"{self.seed}:{upstream}:{downstream}:{counter}".encode(), digest_size=8
            ).digest()
            bits.add(int.from_bytes(h, "big") % self.m)
            counter += 1
        z = 0
        for b in bits:
            z |= 1 << b
        return z

    def stamp(self, z: int, upstream: int, downstream: int) -> int:
        return z | self(upstream, downstream)

    def path_filter(self, path: Iterable[int]) -> int:
        """OR of the link filters along ``path`` (a node sequence in travel order)."""
        z = 0
        path = list(path)
        for a, b in zip(path, path[1:]):
            z |= self(a, b)
        return z


def reverse_forward(node: int, upstream: Iterable[int], z: int, links: LinkFilters) -> list[int]:
    """Upstream neighbours of ``node`` whose link into ``node`` is in ``z``."""
    return sorted(u for u in upstream if contains(z, links(u, node)))


@dataclass(frozen=True)
class ReplyMessage:
    event_id: int
    zfilter: int
    time_from: int
    time_to: int
    tags: tuple[int, ...] = ()
    constraints: tuple[Constraint, ...] = ()

    def __post_init__(self):
        if self.time_from > self.time_to:
            raise ValueError("reply time range must be ordered")


@dataclass(eq=False)
class LtsEntry:
    event: EventRecord
    template: Template
    meta: Meta
    zfilter: int
    stored_at: int
    tags: set = field(default_factory=set)

    def __repr__(self):
        return f"LtsEntry({self.template.key}, t={self.meta.period_start}, n={self.meta.base_count}, tags={sorted(self.tags)})"


class LtsBuffer:
    """Circular buffer of recently seen events with a time-to-live.

    Oldest entries are overwritten once ``capacity`` is reached; entries
    older than ``ttl`` microseconds are invisible to replies.
    """

    def __init__(self, ttl: int, capacity: int = DEFAULT_LTS_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.ttl = ttl
        self.capacity = capacity
        self._buf: deque[LtsEntry] = deque(maxlen=capacity)
        self.overwritten = 0

    def __len__(self):
        return len(self._buf)

    def __iter__(self) -> Iterator[LtsEntry]:
        return iter(self._buf)

    def add(self, event, template, meta, zfilter, now) -> LtsEntry:
        if len(self._buf) == self.capacity:
            self.overwritten += 1
        entry = LtsEntry(event, template, meta, zfilter, now)
        self._buf.append(entry)
        return entry

    def live(self, entry: LtsEntry, now: int) -> bool:
        return now - entry.stored_at <= self.ttl

    def expire(self, now: int) -> int:
        n = 0
        buf = self._buf
        while buf and not self.live(buf[0], now):
            buf.popleft()
            n += 1
        return n

    def match(self, reply: ReplyMessage, now: int, schema: FlowKeySchema | None = None) -> list[LtsEntry]:
        self.expire(now)
        out = []
        for entry in self._buf:
            if entry.event.event_id != reply.event_id:
                continue
            m = entry.meta
            if m.period_end < reply.time_from or m.period_start > reply.time_to:
                continue
            if reply.constraints and not filter_accepts(entry.event, entry.template, reply.constraints, schema):
                continue
            out.append(entry)
        return out


def match_lts(buffer: LtsBuffer, reply: ReplyMessage, now: int, schema: FlowKeySchema | None = None) -> list[LtsEntry]:
    return buffer.match(reply, now, schema)


def annotate(entries: Iterable[LtsEntry], tags: Iterable[int]) -> list[LtsEntry]:
    """Tag ``entries``; return those that gained at least one new tag (to be elected)."""
    tags = set(tags)
    elected = []
    for entry in entries:
        new = tags - entry.tags
        if new:
            entry.tags |= new
            elected.append(entry)
    return elected


def false_positive_bound(n_links: int, m: int = DEFAULT_M, k: int = DEFAULT_K) -> float:
    """Standard Bloom-filter estimate for a filter holding ``n_links`` links."""
    return (1 - math.exp(-k * n_links / m)) ** k
