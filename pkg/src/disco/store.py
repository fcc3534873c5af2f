"""Distributed working storage, retention and legacy-store indirection.

Entries are partitioned by (event family, time bucket): the top 16 bits of
the event id and ``timestamp // bucket_width`` are hashed into a ring key
whose overlay owner holds the entry. A range lookup fans out to the owners
of every (family, bucket) pair the query can touch and merges the answers.
"""
from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .aggregation import AnyOf, Constraint, ConstraintKind, FilterConstraint, filter_accepts
from .events import EventRecord, FlowKeySchema, Meta, Prefix, Template, encode_values
from .overlay import hash_key
from .simnet import SECOND
from .vocabulary import ConceptPattern, matches

log = logging.getLogger(__name__)

FAMILY_BITS = 16


class ProviderUnavailable(RuntimeError):
    pass


def values_digest(event: EventRecord, template: Template) -> int:
    h = hashlib.blake2b(encode_values(event, template), digest_size=8).digest()
    return int.from_bytes(h, "big")


def entry_key(event: EventRecord, template: Template, meta: Meta) -> tuple[int, int, int, int]:
    """Identity used for idempotent inserts."""
    return event.issuer, event.template_id, meta.period_start, values_digest(event, template)


@dataclass(frozen=True)
class RetentionPolicy:
    base_ttl: int = 30 * SECOND
    tag_bonus: Mapping[int, int] = field(default_factory=dict)
    default_tag_bonus: int = 0
    per_lookup_bonus: int = 0
    per_subscriber_bonus: int = 0

    def __post_init__(self):
        durations = [self.base_ttl, self.default_tag_bonus, self.per_lookup_bonus, self.per_subscriber_bonus]
        if any(d < 0 for d in durations) or any(d < 0 for d in self.tag_bonus.values()):
            raise ValueError("retention durations must be >= 0")

    def lifetime(self, tags: Iterable[int], lookups: int, subscribers: int) -> int:
        bonus = sum(self.tag_bonus.get(t, self.default_tag_bonus) for t in tags)
        return (
            self.base_ttl
            + bonus
            + lookups * self.per_lookup_bonus
            + subscribers * self.per_subscriber_bonus
        )


@dataclass(eq=False)
class DwsEntry:
    event: EventRecord
    template: Template
    meta: Meta
    tags: set
    inserted_at: int
    expires_at: int
    owner: int
    lookup_count: int = 0
    subscribers: int = 0

    @property
    def key(self):
        return entry_key(self.event, self.template, self.meta)

    @property
    def timestamp(self) -> int:
        return self.meta.period_start

    def __repr__(self):
        return f"DwsEntry({self.template.key}, t={self.timestamp}, tags={sorted(self.tags)}, exp={self.expires_at})"


@dataclass(frozen=True)
class LookupQuery:
    event_pattern: ConceptPattern
    attr_ranges: tuple[Constraint, ...] = ()
    time_from: int = 0
    time_to: int = (1 << 64) - 1

    def __post_init__(self):
        if self.time_from > self.time_to:
            raise ValueError("lookup time range must be ordered")
        object.__setattr__(self, "attr_ranges", tuple(self.attr_ranges))

    def accepts(self, event: EventRecord, template: Template, timestamp: int, schema=None) -> bool:
        if not matches(self.event_pattern, event.event_id):
            return False
        if not self.time_from <= timestamp <= self.time_to:
            return False
        return not self.attr_ranges or filter_accepts(event, template, self.attr_ranges, schema)


class DistributedWorkingStorage:
    """Partitioned store. ``owner`` maps a ring key to the node holding it.

    Shards live in one object for the simulator; :meth:`query_shard` is what a
    single owner runs when a lookup message reaches it.
    """

    def __init__(
        self,
        owner: Callable[[int], int],
        nodes: Sequence[int],
        policy: RetentionPolicy | None = None,
        bucket_width: int = SECOND,
        schema: FlowKeySchema | None = None,
        fanout_limit: int = 4096,
    ):
        if bucket_width <= 0:
            raise ValueError("bucket_width must be positive")
        self.owner = owner
        self.nodes = sorted(nodes)
        self.policy = policy or RetentionPolicy()
        self.bucket_width = bucket_width
        self.schema = schema
        self.fanout_limit = fanout_limit
        self.shards: dict[int, dict[tuple, DwsEntry]] = {n: {} for n in self.nodes}

    def __len__(self):
        return sum(len(s) for s in self.shards.values())

    def entries(self) -> Iterable[DwsEntry]:
        for node in self.nodes:
            yield from self.shards[node].values()

    @staticmethod
    def family(event_id: int) -> int:
        return event_id >> (32 - FAMILY_BITS)

    def bucket(self, timestamp: int) -> int:
        return timestamp // self.bucket_width

    @staticmethod
    def _key(family: int, bucket: int) -> int:
        # the bucket wraps at 16 bits, so owners repeat every 65536 buckets
        return hash_key(struct.pack(">HH", family, bucket & 0xFFFF))

    def partition_key(self, event_id: int, timestamp: int) -> int:
        return self._key(self.family(event_id), self.bucket(timestamp))

    def owner_of(self, event_id: int, timestamp: int) -> int:
        return self.owner(self.partition_key(event_id, timestamp))

    def insert(
        self,
        event: EventRecord,
        template: Template,
        meta: Meta,
        now: int,
        tags: Iterable[int] = (),
        subscribers: int = 0,
    ) -> DwsEntry:
        """Store an entry at its owner. Re-inserting merges tags and never
        shortens the lifetime."""
        node = self.owner_of(event.event_id, meta.period_start)
        shard = self.shards[node]
        key = entry_key(event, template, meta)
        entry = shard.get(key)
        if entry is None:
            entry = DwsEntry(event, template, meta, set(tags), now, 0, node, subscribers=subscribers)
            entry.expires_at = now + self.policy.lifetime(entry.tags, 0, subscribers)
            shard[key] = entry
        else:
            entry.tags |= set(tags)
            entry.subscribers = max(entry.subscribers, subscribers)
            self._extend(entry)
        return entry

    def _extend(self, entry: DwsEntry) -> None:
        lifetime = self.policy.lifetime(entry.tags, entry.lookup_count, entry.subscribers)
        entry.expires_at = max(entry.expires_at, entry.inserted_at + lifetime)

    def owners_for(self, q: LookupQuery) -> list[int]:
        first = self.bucket(q.time_from)
        last = self.bucket(q.time_to)
        if q.event_pattern.prefix_bits >= FAMILY_BITS:
            families = [self.family(q.event_pattern.id)]
        else:
            top = q.event_pattern.id >> 24
            families = [(top << 8) | low for low in range(256)]
        if len(families) * (last - first + 1) > self.fanout_limit:
            return list(self.nodes)
        owners = {self.owner(self._key(fam, b)) for fam in families for b in range(first, last + 1)}
        return sorted(owners)

    def query_shard(self, node: int, q: LookupQuery, now: int, touch: bool = True) -> list[DwsEntry]:
        hits = []
        for entry in self.shards[node].values():
            if entry.expires_at <= now:
                continue
            if q.accepts(entry.event, entry.template, entry.timestamp, self.schema):
                hits.append(entry)
        if touch:
            for entry in hits:
                entry.lookup_count += 1
                self._extend(entry)
        return hits

    def lookup(self, q: LookupQuery, now: int, touch: bool = True) -> list[DwsEntry]:
        out = []
        for node in self.owners_for(q):
            out.extend(self.query_shard(node, q, now, touch))
        return out

    def sweep(self, node: int, now: int) -> int:
        shard = self.shards[node]
        dead = [k for k, e in shard.items() if e.expires_at <= now]
        for k in dead:
            del shard[k]
        return len(dead)


# -- legacy stores ----------------------------------------------------------------------


@dataclass(frozen=True)
class LegacyRecord:
    event: EventRecord
    template: Template
    meta: Meta
    source: str = ""

    @property
    def key(self):
        return entry_key(self.event, self.template, self.meta)

    @property
    def timestamp(self) -> int:
        return self.meta.period_start


def _interval(c: FilterConstraint):
    k = c.kind
    if k is ConstraintKind.PREFIX:
        p: Prefix = c.lower
        span = (1 << (32 - p.length)) - 1 if p.length < 32 else 0
        return p.addr, p.addr + span
    if k is ConstraintKind.EXACT:
        v = c.lower
        if isinstance(v, Prefix):
            return v.addr, v.addr
        return v, v
    if k is ConstraintKind.LOWER:
        return c.lower, None
    if k is ConstraintKind.UPPER:
        return None, c.upper
    return c.lower, c.upper


def _overlap(a, b) -> bool:
    try:
        (alo, ahi), (blo, bhi) = _interval(a), _interval(b)
        if isinstance(alo, Prefix) or isinstance(blo, Prefix):
            return True
        if ahi is not None and blo is not None and ahi < blo:
            return False
        if bhi is not None and alo is not None and bhi < alo:
            return False
        return True
    except TypeError:
        return True


def regions_intersect(a: Constraint, b: Constraint) -> bool:
    """Conservative test: False only when two constraints on one attribute
    provably admit no common value."""
    if isinstance(a, AnyOf):
        return any(all(regions_intersect(x, b) for x in alt) for alt in a.alternatives)
    if isinstance(b, AnyOf):
        return regions_intersect(b, a)
    return _overlap(a, b)


@dataclass
class LegacyIndirection:
    """Location hint for data kept outside DISco, served by ``provider``."""

    pattern: ConceptPattern
    provider: Callable[[LookupQuery], list[LegacyRecord]]
    attr_ranges: tuple[Constraint, ...] = ()
    name: str = "legacy"

    def covers(self, q: LookupQuery) -> bool:
        if not (self.pattern.covers(q.event_pattern) or q.event_pattern.covers(self.pattern)):
            return False
        for mine in self.attr_ranges:
            for theirs in q.attr_ranges:
                if mine.attr_id == theirs.attr_id and not regions_intersect(mine, theirs):
                    return False
        return True


class LookupProxy:
    """Answers lookups from the DWS and follows legacy indirections."""

    def __init__(self, dws: DistributedWorkingStorage, indirections: Iterable[LegacyIndirection] = ()):
        self.dws = dws
        self.indirections = list(indirections)

    def add_indirection(self, ind: LegacyIndirection) -> None:
        self.indirections.append(ind)

    def legacy_lookup(self, q: LookupQuery) -> list[LegacyRecord]:
        out = []
        for ind in self.indirections:
            if ind.covers(q):
                out.extend(ind.provider(q))
        return out

    def lookup(self, q: LookupQuery, now: int) -> list[DwsEntry | LegacyRecord]:
        found = self.dws.lookup(q, now)
        seen = {e.key for e in found}
        for rec in self.legacy_lookup(q):
            if rec.key not in seen:
                seen.add(rec.key)
                found.append(rec)
        return found

    def reply(self, record: LegacyRecord | DwsEntry, tags: Iterable[int], now: int) -> DwsEntry:
        """Annotate a lookup result; legacy records are copied into the DWS."""
        return self.dws.insert(record.event, record.template, record.meta, now, tags)


class RoutingTableProvider:
    """Legacy provider serving a static prefix -> next-hop table."""

    def __init__(self, routes: Iterable[tuple[Prefix, int]], template: Template, prefix_attr: int, schema=None):
        self.routes = list(routes)
        self.template = template
        self.prefix_attr = prefix_attr
        self.schema = schema
        self.available = True

    def records(self) -> list[LegacyRecord]:
        t = self.template
        return [
            LegacyRecord(EventRecord(t.event_id, t.template_id, t.issuer, (pfx, nh)), t, Meta(1, 0, 0), "routing-table")
            for pfx, nh in self.routes
        ]

    def __call__(self, q: LookupQuery) -> list[LegacyRecord]:
        if not self.available:
            raise ProviderUnavailable("routing table daemon not reachable")
        return [r for r in self.records() if q.accepts(r.event, r.template, r.timestamp, self.schema)]
