"""Control message codecs.

Layouts (big-endian)::

    SUBSCRIBE      0x01 | topic(8) | patternId(4) | prefixBits(1)
                   | maxEvents(4, 0 = none) | maxPeriod(8, 0 = none)
                   | discardCount(1) | discards(4 each)
                   | opCount(1) | opCount x (attrId(4) | op(1)) | constraints
    NO-SUBSCRIBER  0x04 | topic(8)
    READY          0x05 | topic(8)
    REPLY          0x06 | eventId(4) | zfilter(32) | timeFrom(8) | timeTo(8)
                   | tagCount(1) | tags(4 each) | constraints
    LOOKUP         0x07 | queryId(4) | patternId(4) | prefixBits(1)
                   | timeFrom(8) | timeTo(8) | constraints
    LOOKUP-RESULT  0x08 | queryId(4) | count(4) | count x (TEMPLATE | DATA)
    STORE          0x09 | tagCount(1) | tags(4 each) | TEMPLATE | DATA

A constraint block is ``count(1)`` followed by items. A plain constraint is
``kind(1) | attrId(4) | typeTag(1) | bounds`` where only the bounds the kind
uses are present (PREFIX bounds are always a 5-byte prefix). A disjunction
is ``0x10 | attrId(4) | altCount(1)`` followed by one constraint block per
alternative.
"""
from __future__ import annotations

import struct
from enum import IntEnum

from .aggregation import AggregatorOp, AnyOf, ConstraintKind, FilterConstraint, GranularitySpec
from .events import (
    AttrType,
    CodecError,
    Meta,
    Template,
    Truncated,
    UnknownTypeTag,
    data_message_size,
    encode_data,
    encode_template,
    pack_value,
    template_size,
    unpack_value,
)
from .pubsub import SubscriptionSpec
from .reply import ReplyMessage
from .vocabulary import ConceptPattern

ANYOF_TAG = 0x10


class MsgKind(IntEnum):
    SUBSCRIBE = 0x01
    TEMPLATE = 0x02
    DATA = 0x03
    NO_SUBSCRIBER = 0x04
    SUBSCRIBERS_READY = 0x05
    REPLY = 0x06
    LOOKUP = 0x07
    LOOKUP_RESULT = 0x08
    STORE = 0x09


class _Reader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def take(self, fmt: str):
        st = struct.Struct(">" + fmt)
        if len(self.data) - self.pos < st.size:
            raise Truncated(f"need {st.size} bytes at offset {self.pos}")
        out = st.unpack_from(self.data, self.pos)
        self.pos += st.size
        return out if len(out) > 1 else out[0]

    def value(self, ty: AttrType):
        v, self.pos = unpack_value(ty, self.data, self.pos)
        return v

    def done(self) -> None:
        if self.pos != len(self.data):
            raise CodecError(f"{len(self.data) - self.pos} trailing bytes")


def _attr_type(tag: int) -> AttrType:
    try:
        return AttrType(tag)
    except ValueError:
        raise UnknownTypeTag(f"type tag {tag:#04x}") from None


# -- constraint block ---------------------------------------------------------------


def _encode_constraint(c) -> bytes:
    if isinstance(c, AnyOf):
        head = struct.pack(">BIB", ANYOF_TAG, c.attr_id, len(c.alternatives))
        return head + b"".join(encode_constraints(alt) for alt in c.alternatives)
    head = struct.pack(">BIB", int(c.kind), c.attr_id, int(c.attr_type))
    k = c.kind
    if k is ConstraintKind.PREFIX:
        return head + pack_value(AttrType.IPV4PREFIX, c.lower)
    if k in (ConstraintKind.LOWER, ConstraintKind.EXACT):
        return head + pack_value(c.attr_type, c.lower)
    if k is ConstraintKind.UPPER:
        return head + pack_value(c.attr_type, c.upper)
    return head + pack_value(c.attr_type, c.lower) + pack_value(c.attr_type, c.upper)


def encode_constraints(constraints) -> bytes:
    constraints = tuple(constraints)
    if len(constraints) > 255:
        raise CodecError("at most 255 constraints per block")
    return bytes([len(constraints)]) + b"".join(_encode_constraint(c) for c in constraints)


def _read_constraint(r: _Reader):
    kind = r.take("B")
    if kind == ANYOF_TAG:
        attr, n = r.take("IB")
        return AnyOf(attr, tuple(_read_constraints(r) for _ in range(n)))
    try:
        kind = ConstraintKind(kind)
    except ValueError:
        raise CodecError(f"unknown constraint kind {kind:#04x}") from None
    attr, tag = r.take("IB")
    ty = _attr_type(tag)
    lower = upper = None
    if kind is ConstraintKind.PREFIX:
        lower = r.value(AttrType.IPV4PREFIX)
    elif kind in (ConstraintKind.LOWER, ConstraintKind.EXACT):
        lower = r.value(ty)
    elif kind is ConstraintKind.UPPER:
        upper = r.value(ty)
    else:
        lower, upper = r.value(ty), r.value(ty)
    return FilterConstraint(attr, kind, ty, lower, upper)


def _read_constraints(r: _Reader) -> tuple:
    n = r.take("B")
    return tuple(_read_constraint(r) for _ in range(n))


def decode_constraints(data: bytes) -> tuple:
    r = _Reader(data)
    out = _read_constraints(r)
    r.done()
    return out


# -- subscribe ----------------------------------------------------------------------


def encode_subscribe(topic: int, spec: SubscriptionSpec) -> bytes:
    g = spec.granularity
    discards = sorted(spec.discards)
    if len(discards) > 255 or len(spec.ops) > 255:
        raise CodecError("at most 255 discards and operators")
    parts = [
        struct.pack(
            ">BQIBIQ",
            MsgKind.SUBSCRIBE,
            topic,
            spec.event_pattern.id,
            spec.event_pattern.prefix_bits,
            g.max_events or 0,
            g.max_period or 0,
        ),
        bytes([len(discards)]),
        b"".join(struct.pack(">I", d) for d in discards),
        bytes([len(spec.ops)]),
        b"".join(struct.pack(">IB", a, int(op)) for a, op in spec.ops),
        encode_constraints(spec.filters),
    ]
    return b"".join(parts)


def decode_subscribe(data: bytes) -> tuple[int, SubscriptionSpec]:
    r = _Reader(data)
    kind, topic, pid, bits, max_events, max_period = r.take("BQIBIQ")
    if kind != MsgKind.SUBSCRIBE:
        raise CodecError(f"not a subscribe message (kind {kind:#04x})")
    discards = [r.take("I") for _ in range(r.take("B"))]
    ops = []
    for _ in range(r.take("B")):
        attr, op = r.take("IB")
        ops.append((attr, AggregatorOp(op)))
    filters = _read_constraints(r)
    r.done()
    gran = GranularitySpec(max_events or None, max_period or None)
    return topic, SubscriptionSpec(ConceptPattern(pid, bits), filters, discards, ops, gran)


def subscribe_size(spec: SubscriptionSpec) -> int:
    return len(encode_subscribe(0, spec))


# -- small notifications ------------------------------------------------------------


def encode_notice(kind: MsgKind, topic: int) -> bytes:
    if kind not in (MsgKind.NO_SUBSCRIBER, MsgKind.SUBSCRIBERS_READY):
        raise ValueError("not a notification kind")
    return struct.pack(">BQ", kind, topic)


def decode_notice(data: bytes) -> tuple[MsgKind, int]:
    r = _Reader(data)
    kind, topic = r.take("BQ")
    r.done()
    return MsgKind(kind), topic


NOTICE_SIZE = 9


# -- reply --------------------------------------------------------------------------


def encode_reply(msg: ReplyMessage) -> bytes:
    if len(msg.tags) > 255:
        raise CodecError("at most 255 tags")
    return b"".join(
        (
            struct.pack(">BI", MsgKind.REPLY, msg.event_id),
            msg.zfilter.to_bytes(32, "big"),
            struct.pack(">QQB", msg.time_from, msg.time_to, len(msg.tags)),
            b"".join(struct.pack(">I", t) for t in msg.tags),
            encode_constraints(msg.constraints),
        )
    )


def decode_reply(data: bytes) -> ReplyMessage:
    r = _Reader(data)
    kind, eid = r.take("BI")
    if kind != MsgKind.REPLY:
        raise CodecError(f"not a reply message (kind {kind:#04x})")
    if len(data) - r.pos < 32:
        raise Truncated("reply z-filter truncated")
    z = int.from_bytes(data[r.pos : r.pos + 32], "big")
    r.pos += 32
    t_from, t_to, ntags = r.take("QQB")
    tags = tuple(r.take("I") for _ in range(ntags))
    constraints = _read_constraints(r)
    r.done()
    return ReplyMessage(eid, z, t_from, t_to, tags, constraints)


# -- storage ------------------------------------------------------------------------


def encode_lookup(query_id: int, pattern: ConceptPattern, time_from: int, time_to: int, constraints=()) -> bytes:
    head = struct.pack(">BIIBQQ", MsgKind.LOOKUP, query_id, pattern.id, pattern.prefix_bits, time_from, time_to)
    return head + encode_constraints(constraints)


def decode_lookup(data: bytes):
    r = _Reader(data)
    kind, qid, pid, bits, t_from, t_to = r.take("BIIBQQ")
    if kind != MsgKind.LOOKUP:
        raise CodecError(f"not a lookup message (kind {kind:#04x})")
    constraints = _read_constraints(r)
    r.done()
    return qid, ConceptPattern(pid, bits), t_from, t_to, constraints


def lookup_result_size(templates) -> int:
    return 9 + sum(template_size(t) + data_message_size(t) for t in templates)


def store_size(template: Template, ntags: int) -> int:
    return 2 + 4 * ntags + template_size(template) + data_message_size(template)


def encode_store(event, template: Template, meta: Meta, tags=(), zfilter: int = 0) -> bytes:
    tags = tuple(tags)
    return b"".join(
        (
            struct.pack(">BB", MsgKind.STORE, len(tags)),
            b"".join(struct.pack(">I", t) for t in tags),
            encode_template(template),
            encode_data(event, template, meta, zfilter),
        )
    )

