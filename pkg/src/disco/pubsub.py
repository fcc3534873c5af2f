"""Subscriptions, the topic oracle and upstream alignment.

A topic is the 16-bit family prefix of an event id, hashed onto the ring.
Patterns finer than /16 ride their family's tree and forwarders filter by
pattern; a /8 pattern expands to one topic per registered family under it.

Each forwarder subscribes upstream with a single spec that accepts
everything any of its children accepts (:func:`align_upstream`). Aggregation
upstream is only allowed when it cannot hurt any child: children must apply
the same filters and agree on the operator of every retained attribute.
Otherwise the upstream spec passes events through one by one and the
forwarder aggregates separately for each child.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .aggregation import (
    PASSTHROUGH,
    AggregatorOp,
    AnyOf,
    Constraint,
    GranularitySpec,
    filter_accepts,
)
from .events import EventRecord, FlowKeySchema, Template
from .overlay import hash_key
from .vocabulary import ConceptPattern, VocabularyTree, common_pattern, is_ancestor, matches

ORACLE_BITS = 16


class InvalidSpec(ValueError):
    pass


class UnknownTemplate(KeyError):
    pass


class NotEntitled(PermissionError):
    pass


def family_prefix(concept_id: int) -> int:
    return concept_id >> (32 - ORACLE_BITS)


def oracle_map(pattern: ConceptPattern | int) -> int:
    """Topic key shared by every pattern under one 16-bit family."""
    cid = pattern.id if isinstance(pattern, ConceptPattern) else pattern
    return hash_key(b"topic" + struct.pack(">H", family_prefix(cid)))


def topics_for(pattern: ConceptPattern, vocab: VocabularyTree | None = None) -> list[int]:
    """Topic keys a subscription to ``pattern`` must join."""
    if pattern.prefix_bits >= ORACLE_BITS or vocab is None:
        return [oracle_map(pattern)]
    families = sorted({family_prefix(cid) for _, cid in vocab if matches(pattern, cid)})
    families = [f for f in families if f & 0xFF]  # the bare top-level concept owns no events
    return [oracle_map(f << (32 - ORACLE_BITS)) for f in families] or [oracle_map(pattern)]


@dataclass(frozen=True)
class SubscriptionSpec:
    event_pattern: ConceptPattern
    filters: tuple[Constraint, ...] = ()
    discards: frozenset[int] = frozenset()
    ops: tuple[tuple[int, AggregatorOp], ...] = ()
    granularity: GranularitySpec = PASSTHROUGH

    def __post_init__(self):
        if not isinstance(self.event_pattern, ConceptPattern):
            raise InvalidSpec("event_pattern must be a ConceptPattern")
        if not isinstance(self.granularity, GranularitySpec):
            raise InvalidSpec("granularity must be a GranularitySpec")
        object.__setattr__(self, "filters", tuple(self.filters))
        object.__setattr__(self, "discards", frozenset(self.discards))
        ops = self.ops.items() if isinstance(self.ops, Mapping) else self.ops
        try:
            norm = tuple(sorted((int(a), AggregatorOp(op)) for a, op in ops))
        except ValueError as exc:
            raise InvalidSpec(str(exc)) from None
        if len({a for a, _ in norm}) != len(norm):
            raise InvalidSpec("one operator per attribute")
        object.__setattr__(self, "ops", norm)

    @property
    def op_map(self) -> dict[int, AggregatorOp]:
        return dict(self.ops)

    @property
    def passthrough(self) -> bool:
        return self.granularity.passthrough

    def accepts(self, e: EventRecord, t: Template, schema: FlowKeySchema | None = None) -> bool:
        return matches(self.event_pattern, e.event_id) and filter_accepts(e, t, self.filters, schema)


def _by_attr(filters: Iterable[Constraint]) -> dict[int, tuple[Constraint, ...]]:
    out: dict[int, list] = {}
    for c in filters:
        out.setdefault(c.attr_id, []).append(c)
    return {a: tuple(cs) for a, cs in out.items()}


def _alternatives(conj: tuple[Constraint, ...]) -> list[tuple[Constraint, ...]]:
    if len(conj) == 1 and isinstance(conj[0], AnyOf):
        return list(conj[0].alternatives)
    return [conj]


def merge_filters(children: Sequence[Sequence[Constraint]]) -> tuple[Constraint, ...]:
    """Per attribute, the union of what every child accepts.

    An attribute left unconstrained by any child drops out entirely.
    """
    per_child = [_by_attr(fs) for fs in children]
    shared = set(per_child[0])
    for m in per_child[1:]:
        shared &= set(m)
    merged: list[Constraint] = []
    for attr in sorted(shared):
        conjs = [m[attr] for m in per_child]
        if all(c == conjs[0] for c in conjs):
            merged.extend(conjs[0])
            continue
        alts: list = []
        for conj in conjs:
            for alt in _alternatives(conj):
                if alt not in alts:
                    alts.append(alt)
        merged.append(AnyOf(attr, tuple(alts)))
    return tuple(merged)


def _protected(discard: int, filter_attrs: set[int]) -> bool:
    return any(discard == a or is_ancestor(discard, a) for a in filter_attrs)


def align_upstream(specs: Sequence[SubscriptionSpec]) -> SubscriptionSpec:
    """Finest-grained spec serving every child in ``specs``."""
    if not specs:
        raise ValueError("need at least one child spec")
    if len(specs) == 1:
        return specs[0]
    pattern = common_pattern(s.event_pattern for s in specs)
    filters = merge_filters([s.filters for s in specs])

    filter_attrs = {c.attr_id for s in specs for c in s.filters}
    discards = frozenset.intersection(*(s.discards for s in specs))
    discards = frozenset(d for d in discards if not _protected(d, filter_attrs))

    same_filters = all(set(s.filters) == set(specs[0].filters) for s in specs)
    ops: dict[int, AggregatorOp] = {}
    agree = same_filters
    if agree:
        for attr in sorted({a for s in specs for a, _ in s.ops}):
            if attr in discards:
                continue
            wanted = {s.op_map.get(attr) for s in specs if attr not in s.discards}
            if len(wanted) > 1:
                agree = False
                break
            op = wanted.pop()
            if op is not None:
                ops[attr] = op
    if agree:
        evs = [s.granularity.max_events for s in specs if s.granularity.max_events is not None]
        pers = [s.granularity.max_period for s in specs if s.granularity.max_period is not None]
        gran = GranularitySpec(min(evs) if evs else None, min(pers) if pers else None)
    else:
        gran, ops = PASSTHROUGH, {}
    return SubscriptionSpec(pattern, filters, discards, ops, gran)


def remaining_filters(spec: SubscriptionSpec, upstream: SubscriptionSpec | None) -> tuple[Constraint, ...]:
    """Constraints of ``spec`` that still need checking at this node.

    Everything arriving here already satisfies the constraints of the spec
    this node sent upstream, at the level of base events. Re-evaluating
    those on an aggregate would test aggregated values instead, so they are
    skipped.
    """
    if upstream is None:
        return spec.filters
    done = set(upstream.filters)
    return tuple(c for c in spec.filters if c not in done)
