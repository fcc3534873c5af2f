"""Filters, attribute discards and per-attribute aggregators.

Aggregation merges events of the same type into one coarser event. Every
aggregate remembers how many base events it stands for (``base_count``), so
an aggregate can itself be aggregated again further down a multicast tree.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import IntEnum
from typing import Any, Iterable, Mapping, Sequence, Union

from .events import (
    AttrType,
    EventRecord,
    FlowKeySchema,
    Meta,
    Prefix,
    Template,
)
from .vocabulary import is_ancestor


class MissingAttribute(KeyError):
    pass


class TypeMismatch(TypeError):
    pass


class InvalidAggregator(ValueError):
    pass


class AllFieldsDiscarded(UserWarning):
    pass


# -- filters ------------------------------------------------------------------------


class ConstraintKind(IntEnum):
    LOWER = 1
    UPPER = 2
    RANGE = 3
    EXACT = 4
    PREFIX = 5


ORDERED_TYPES = frozenset(
    {
        AttrType.COUNTER64,
        AttrType.GAUGE64,
        AttrType.FLOAT64,
        AttrType.TIMESTAMP,
        AttrType.IPV4ADDR,
        AttrType.IPV4PREFIX,
        AttrType.NODELOC,
    }
)
ADDRESS_TYPES = frozenset({AttrType.IPV4ADDR, AttrType.IPV4PREFIX})


@dataclass(frozen=True)
class FilterConstraint:
    """One bound on one attribute. ``PREFIX`` keeps its :class:`Prefix` in ``lower``."""

    attr_id: int
    kind: ConstraintKind
    attr_type: AttrType
    lower: Any = None
    upper: Any = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ConstraintKind(self.kind))
        object.__setattr__(self, "attr_type", AttrType(self.attr_type))
        k, ty = self.kind, self.attr_type
        if k is ConstraintKind.PREFIX:
            if ty not in ADDRESS_TYPES:
                raise ValueError("PREFIX constraints only apply to IPv4 addresses and prefixes")
            if not isinstance(self.lower, Prefix):
                object.__setattr__(self, "lower", Prefix(*self.lower))
        elif k in (ConstraintKind.LOWER, ConstraintKind.UPPER, ConstraintKind.RANGE):
            if ty not in ORDERED_TYPES:
                raise ValueError(f"{ty.name} values are not ordered")
            if k is ConstraintKind.RANGE and self.lower > self.upper:
                raise ValueError("RANGE needs lower <= upper")

    @classmethod
    def at_least(cls, attr_id, attr_type, bound):
        return cls(attr_id, ConstraintKind.LOWER, attr_type, lower=bound)

    @classmethod
    def at_most(cls, attr_id, attr_type, bound):
        return cls(attr_id, ConstraintKind.UPPER, attr_type, upper=bound)

    @classmethod
    def between(cls, attr_id, attr_type, lower, upper):
        return cls(attr_id, ConstraintKind.RANGE, attr_type, lower=lower, upper=upper)

    @classmethod
    def equals(cls, attr_id, attr_type, value):
        return cls(attr_id, ConstraintKind.EXACT, attr_type, lower=value)

    @classmethod
    def prefix(cls, attr_id, prefix: Prefix | str, attr_type=AttrType.IPV4ADDR):
        if isinstance(prefix, str):
            prefix = Prefix.parse(prefix)
        return cls(attr_id, ConstraintKind.PREFIX, attr_type, lower=prefix)

    @property
    def attrs(self) -> frozenset[int]:
        return frozenset((self.attr_id,))

    def check(self, value) -> bool:
        k = self.kind
        if k is ConstraintKind.EXACT:
            return value == self.lower
        if k is ConstraintKind.PREFIX:
            p = self.lower
            if isinstance(value, Prefix):
                return value.length >= p.length and p.contains(value.addr)
            return p.contains(value)
        if k is ConstraintKind.LOWER:
            return value >= self.lower
        if k is ConstraintKind.UPPER:
            return value <= self.upper
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class AnyOf:
    """Disjunction of per-attribute regions; built when merging children's filters."""

    attr_id: int
    alternatives: tuple  # tuple of tuples of Constraint, each a conjunction

    @property
    def attrs(self) -> frozenset[int]:
        return frozenset((self.attr_id,))

    def check(self, value) -> bool:
        return any(all(c.check(value) for c in alt) for alt in self.alternatives)


Constraint = Union[FilterConstraint, AnyOf]


def lookup_value(e: EventRecord, t: Template, attr_id: int, schema: FlowKeySchema | None = None):
    """Value of ``attr_id`` in ``e``, looking inside flow keys for components."""
    for i, (a, ty) in enumerate(t.fields):
        if a == attr_id:
            return e.values[i]
    if schema is not None and attr_id in schema.components:
        fld = schema.components[attr_id][0]
        for i, (a, ty) in enumerate(t.fields):
            if ty is AttrType.FLOWKEY and is_ancestor(a, attr_id):
                return getattr(e.values[i], fld)
    raise MissingAttribute(attr_id)


def eval_filter(
    e: EventRecord,
    t: Template,
    constraints: Iterable[Constraint],
    schema: FlowKeySchema | None = None,
) -> bool:
    """Conjunction of all constraints; raises :class:`MissingAttribute`."""
    for c in constraints:
        if not c.check(lookup_value(e, t, c.attr_id, schema)):
            return False
    return True


def filter_accepts(e, t, constraints, schema=None) -> bool:
    """Like :func:`eval_filter` but an absent attribute simply fails the filter."""
    try:
        return eval_filter(e, t, constraints, schema)
    except MissingAttribute:
        return False


# -- aggregators --------------------------------------------------------------------


class AggregatorOp(IntEnum):
    SUM = 1
    MIN = 2
    MAX = 3
    MEAN = 4
    COUNT = 5
    FIRST = 6
    LAST = 7


_NUMERIC = {AttrType.COUNTER64, AttrType.GAUGE64, AttrType.FLOAT64}
_ALL = set(AttrType)

APPLICABLE: dict[AggregatorOp, frozenset[AttrType]] = {
    AggregatorOp.SUM: frozenset(_NUMERIC),
    AggregatorOp.MEAN: frozenset(_NUMERIC),
    AggregatorOp.MIN: frozenset(_NUMERIC | {AttrType.TIMESTAMP}),
    AggregatorOp.MAX: frozenset(_NUMERIC | {AttrType.TIMESTAMP}),
    AggregatorOp.FIRST: frozenset(_ALL),
    AggregatorOp.LAST: frozenset(_ALL),
    AggregatorOp.COUNT: frozenset(_ALL),
}

DEFAULT_OP: dict[AttrType, AggregatorOp] = {
    AttrType.COUNTER64: AggregatorOp.SUM,
    AttrType.GAUGE64: AggregatorOp.MEAN,
    AttrType.FLOAT64: AggregatorOp.MEAN,
    AttrType.TIMESTAMP: AggregatorOp.MIN,
    AttrType.IPV4ADDR: AggregatorOp.FIRST,
    AttrType.IPV4PREFIX: AggregatorOp.FIRST,
    AttrType.FLOWKEY: AggregatorOp.FIRST,
    AttrType.NODELOC: AggregatorOp.FIRST,
}


def check_applicable(op: AggregatorOp, ty: AttrType) -> None:
    if ty not in APPLICABLE[op]:
        raise InvalidAggregator(f"{op.name} is not defined for {ty.name}")


def output_type(op: AggregatorOp, ty: AttrType) -> AttrType:
    if op is AggregatorOp.COUNT:
        return AttrType.COUNTER64
    if op is AggregatorOp.MEAN:
        return AttrType.FLOAT64
    return ty


def resolve_ops(
    fields: Sequence[tuple[int, AttrType]],
    ops: Mapping[int, AggregatorOp] | None,
    strict: bool = True,
) -> tuple[AggregatorOp, ...]:
    """Operator for each field: the requested one, else the type default.

    With ``strict=False`` an inapplicable request quietly falls back to the
    default instead of raising.
    """
    ops = ops or {}
    out = []
    for attr, ty in fields:
        op = ops.get(attr)
        if op is None:
            op = DEFAULT_OP[ty]
        elif ty not in APPLICABLE[op]:
            if strict:
                check_applicable(op, ty)
            op = DEFAULT_OP[ty]
        out.append(AggregatorOp(op))
    return tuple(out)


@dataclass(frozen=True)
class GranularitySpec:
    """Forward an aggregate once it holds ``max_events`` base events or is
    ``max_period`` microseconds old, whichever happens first."""

    max_events: int | None = None
    max_period: int | None = None

    def __post_init__(self):
        if self.max_events is None and self.max_period is None:
            raise ValueError("granularity needs max_events, max_period or both")
        if self.max_events is not None and self.max_events < 1:
            raise ValueError("max_events must be positive")
        if self.max_period is not None and self.max_period <= 0:
            raise ValueError("max_period must be positive")

    @property
    def passthrough(self) -> bool:
        return self.max_events == 1


PASSTHROUGH = GranularitySpec(max_events=1)


def derive_child_template(
    t: Template,
    discards: Iterable[int],
    *,
    issuer: int,
    template_id: int,
    ops: Mapping[int, AggregatorOp] | None = None,
    strict: bool = False,
) -> tuple[Template, tuple[int, ...], tuple[AggregatorOp, ...]]:
    """Template forwarded to one child, plus the input field index of each
    output field and the operator applied to it.

    Field order is preserved; unknown discard ids are ignored. Output types
    follow the operator (a MEAN of counters is a float).
    """
    dropped = set(discards)
    picks = tuple(i for i, (a, _) in enumerate(t.fields) if a not in dropped)
    kept = [t.fields[i] for i in picks]
    if not kept and t.fields:
        warnings.warn(
            AllFieldsDiscarded(f"all fields of template {t.key} discarded; only counts remain"),
            stacklevel=2,
        )
    resolved = resolve_ops(kept, ops, strict=strict)
    fields = tuple((a, output_type(op, ty)) for (a, ty), op in zip(kept, resolved))
    return Template(issuer, template_id, t.event_id, fields), picks, resolved


class PendingAggregate:
    """Aggregate being built for one child from one input format."""

    __slots__ = ("template", "picks", "ops", "acc", "base_count", "period_start", "zfilter", "timer")

    def __init__(self, template: Template, picks: Sequence[int], ops: Sequence[AggregatorOp], period_start: int):
        self.template = template
        self.picks = tuple(picks)
        self.ops = tuple(ops)
        self.acc: list = [None] * len(self.ops)
        self.base_count = 0
        self.period_start = period_start
        self.zfilter = 0
        self.timer = None

    def __repr__(self):
        return f"PendingAggregate(template={self.template.key}, base_count={self.base_count})"


def accumulate(agg: PendingAggregate, e: EventRecord, weight: int = 1, zfilter: int = 0) -> PendingAggregate:
    """Fold ``e`` (which stands for ``weight`` base events) into ``agg``."""
    if weight < 1:
        raise ValueError("weight must be >= 1")
    values = e.values
    first = agg.base_count == 0
    acc = agg.acc
    for j, (i, op) in enumerate(zip(agg.picks, agg.ops)):
        try:
            v = values[i]
        except IndexError:
            raise TypeMismatch("event has fewer values than the aggregate's input template") from None
        a = acc[j]
        if op is AggregatorOp.SUM:
            acc[j] = v if first else a + v
        elif op is AggregatorOp.MEAN:
            acc[j] = (v * weight, weight) if first else (a[0] + v * weight, a[1] + weight)
        elif op is AggregatorOp.MIN:
            acc[j] = v if first or v < a else a
        elif op is AggregatorOp.MAX:
            acc[j] = v if first or v > a else a
        elif op is AggregatorOp.COUNT:
            acc[j] = weight if first else a + weight
        elif op is AggregatorOp.FIRST:
            if first:
                acc[j] = v
        else:  # LAST
            acc[j] = v
    agg.base_count += weight
    agg.zfilter |= zfilter
    return agg


def finalize(agg: PendingAggregate, now: int) -> tuple[EventRecord, Meta]:
    if agg.base_count < 1:
        raise ValueError("cannot finalize an empty aggregate")
    values = []
    for op, a in zip(agg.ops, agg.acc):
        values.append(a[0] / a[1] if op is AggregatorOp.MEAN else a)
    t = agg.template
    record = EventRecord(t.event_id, t.template_id, t.issuer, tuple(values))
    return record, Meta(agg.base_count, agg.period_start, now)
