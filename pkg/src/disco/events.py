"""Templates, typed attribute values and the fixed-width wire codec.

Layouts (big-endian)::

    TEMPLATE  kind(1)=0x02 | issuer(8) | templateId(2) | eventId(4)
              | fieldCount(2) | fieldCount x (attrId(4) | typeTag(1))
    EVENT     kind(1)=0x03 | issuer(8) | templateId(2) | eventId(4) | values
    DATA      EVENT header | baseCount(4) | periodStart(8) | periodEnd(8)
              | zfilter(32) | values

Every value has a fixed width, so the size of an encoded event depends on
its template only.
"""
from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from functools import lru_cache
from typing import Any, NamedTuple, Sequence

from .vocabulary import VocabularyTree

KIND_TEMPLATE = 0x02
KIND_DATA = 0x03
ZFILTER_BYTES = 32


class CodecError(Exception):
    pass


class Truncated(CodecError):
    pass


class UnknownTypeTag(CodecError):
    pass


class TemplateMismatch(CodecError):
    pass


class UnknownComponent(KeyError):
    pass


class AttrType(IntEnum):
    COUNTER64 = 1
    GAUGE64 = 2
    FLOAT64 = 3
    TIMESTAMP = 4
    IPV4ADDR = 5
    IPV4PREFIX = 6
    FLOWKEY = 7
    NODELOC = 8


class FlowKey(NamedTuple):
    src: int
    dst: int
    sport: int
    dport: int
    proto: int

    @classmethod
    def of(cls, src: str, dst: str, sport: int, dport: int, proto: int) -> "FlowKey":
        return cls(ip(src), ip(dst), sport, dport, proto)

    def __str__(self):
        return f"{ip_str(self.src)}:{self.sport}->{ip_str(self.dst)}:{self.dport}/{self.proto}"


class Prefix(NamedTuple):
    addr: int
    length: int

    @classmethod
    def parse(cls, text: str) -> "Prefix":
        net = ipaddress.IPv4Network(text, strict=False)
        return cls(int(net.network_address), net.prefixlen)

    def contains(self, addr: int) -> bool:
        if self.length == 0:
            return True
        return (addr ^ self.addr) >> (32 - self.length) == 0

    def __str__(self):
        return f"{ip_str(self.addr)}/{self.length}"


def ip(text: str) -> int:
    return int(ipaddress.IPv4Address(text))


def ip_str(value: int) -> str:
    return str(ipaddress.IPv4Address(value))


# struct codes per type; FLOWKEY and IPV4PREFIX flatten to several slots
_CODES = {
    AttrType.COUNTER64: "Q",
    AttrType.GAUGE64: "q",
    AttrType.FLOAT64: "d",
    AttrType.TIMESTAMP: "Q",
    AttrType.IPV4ADDR: "I",
    AttrType.IPV4PREFIX: "IB",
    AttrType.FLOWKEY: "IIHHB",
    AttrType.NODELOC: "Q",
}
WIDTHS = {t: struct.calcsize(">" + c) for t, c in _CODES.items()}


@dataclass(frozen=True)
class Template:
    issuer: int
    template_id: int
    event_id: int
    fields: tuple[tuple[int, AttrType], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple((a, AttrType(t)) for a, t in self.fields))
        attrs = [a for a, _ in self.fields]
        if len(set(attrs)) != len(attrs):
            raise ValueError("attribute ids must be distinct within a template")
        if not 0 <= self.template_id <= 0xFFFF:
            raise ValueError("template id is 16-bit")

    @property
    def key(self) -> tuple[int, int]:
        return self.issuer, self.template_id

    @property
    def attr_ids(self) -> tuple[int, ...]:
        return tuple(a for a, _ in self.fields)

    @property
    def signature(self) -> tuple:
        """Format identity regardless of issuer: same event, same field list."""
        return self.event_id, self.fields

    def index(self, attr_id: int) -> int:
        for i, (a, _) in enumerate(self.fields):
            if a == attr_id:
                return i
        raise KeyError(attr_id)

    def type_of(self, attr_id: int) -> AttrType:
        return self.fields[self.index(attr_id)][1]


@dataclass(frozen=True)
class EventRecord:
    event_id: int
    template_id: int
    issuer: int
    values: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))


@dataclass(frozen=True)
class Meta:
    """Aggregation context carried with every data message."""

    base_count: int = 1
    period_start: int = 0
    period_end: int = 0


# -- sizes -------------------------------------------------------------------

_EVENT_HEADER = struct.Struct(">BQHI")
_TEMPLATE_HEADER = struct.Struct(">BQHIH")
_FIELD = struct.Struct(">IB")
_META = struct.Struct(">IQQ")


def template_size(t: Template) -> int:
    return _TEMPLATE_HEADER.size + _FIELD.size * len(t.fields)


def values_size(t: Template) -> int:
    return sum(WIDTHS[ty] for _, ty in t.fields)


def event_size(t: Template) -> int:
    return _EVENT_HEADER.size + values_size(t)


def data_message_size(t: Template) -> int:
    return event_size(t) + _META.size + ZFILTER_BYTES


# -- template codec -------------------------------------------------------------


def encode_template(t: Template) -> bytes:
    out = [_TEMPLATE_HEADER.pack(KIND_TEMPLATE, t.issuer, t.template_id, t.event_id, len(t.fields))]
    out.extend(_FIELD.pack(a, int(ty)) for a, ty in t.fields)
    return b"".join(out)


def decode_template(data: bytes) -> Template:
    if len(data) < _TEMPLATE_HEADER.size:
        raise Truncated(f"template header needs {_TEMPLATE_HEADER.size} bytes, got {len(data)}")
    kind, issuer, tid, eid, count = _TEMPLATE_HEADER.unpack_from(data)
    if kind != KIND_TEMPLATE:
        raise CodecError(f"not a template message (kind {kind:#04x})")
    need = _TEMPLATE_HEADER.size + count * _FIELD.size
    if len(data) < need:
        raise Truncated(f"template declares {count} fields, needs {need} bytes, got {len(data)}")
    if len(data) > need:
        raise CodecError(f"{len(data) - need} trailing bytes after template")
    fields = []
    for i in range(count):
        attr, tag = _FIELD.unpack_from(data, _TEMPLATE_HEADER.size + i * _FIELD.size)
        try:
            fields.append((attr, AttrType(tag)))
        except ValueError:
            raise UnknownTypeTag(f"type tag {tag:#04x}") from None
    return Template(issuer, tid, eid, tuple(fields))


# -- value codec ----------------------------------------------------------------


@lru_cache(maxsize=1024)
def _values_struct(types: tuple[AttrType, ...]) -> struct.Struct:
    return struct.Struct(">" + "".join(_CODES[t] for t in types))


def _types(t: Template) -> tuple[AttrType, ...]:
    return tuple(ty for _, ty in t.fields)


def _flatten(types: Sequence[AttrType], values: Sequence[Any]) -> list:
    flat: list = []
    for ty, v in zip(types, values):
        if ty in (AttrType.FLOWKEY, AttrType.IPV4PREFIX):
            flat.extend(v)
        elif ty is AttrType.FLOAT64:
            flat.append(float(v))
        else:
            flat.append(v)
    return flat


def _unflatten(types: Sequence[AttrType], flat: Sequence[Any]) -> tuple:
    out = []
    i = 0
    for ty in types:
        if ty is AttrType.FLOWKEY:
            out.append(FlowKey(*flat[i : i + 5]))
            i += 5
        elif ty is AttrType.IPV4PREFIX:
            out.append(Prefix(*flat[i : i + 2]))
            i += 2
        else:
            out.append(flat[i])
            i += 1
    return tuple(out)


def pack_value(ty: AttrType, value) -> bytes:
    """Encode one value of type ``ty`` (used for filter bounds)."""
    return _values_struct((ty,)).pack(*_flatten((ty,), (value,)))


def unpack_value(ty: AttrType, data: bytes, offset: int = 0) -> tuple[Any, int]:
    """Decode one value; returns it with the offset just past it."""
    st = _values_struct((ty,))
    if len(data) - offset < st.size:
        raise Truncated(f"{ty.name} value needs {st.size} bytes")
    return _unflatten((ty,), st.unpack_from(data, offset))[0], offset + st.size


def check_conforms(e: EventRecord, t: Template) -> None:
    if (e.event_id, e.template_id, e.issuer) != (t.event_id, t.template_id, t.issuer):
        raise TemplateMismatch("event header does not reference this template")
    if len(e.values) != len(t.fields):
        raise TemplateMismatch(f"template has {len(t.fields)} fields, event has {len(e.values)} values")


def encode_values(e: EventRecord, t: Template) -> bytes:
    types = _types(t)
    try:
        return _values_struct(types).pack(*_flatten(types, e.values))
    except (struct.error, TypeError) as exc:
        raise TemplateMismatch(f"values do not fit template types: {exc}") from None


def encode_event(e: EventRecord, t: Template) -> bytes:
    check_conforms(e, t)
    return _EVENT_HEADER.pack(KIND_DATA, e.issuer, e.template_id, e.event_id) + encode_values(e, t)


def _decode_header(data: bytes, t: Template) -> None:
    if len(data) < _EVENT_HEADER.size:
        raise Truncated(f"event header needs {_EVENT_HEADER.size} bytes, got {len(data)}")
    kind, issuer, tid, eid = _EVENT_HEADER.unpack_from(data)
    if kind != KIND_DATA:
        raise CodecError(f"not a data message (kind {kind:#04x})")
    if (issuer, tid, eid) != (t.issuer, t.template_id, t.event_id):
        raise TemplateMismatch("data message references a different template")


def _decode_values(data: bytes, offset: int, t: Template) -> tuple:
    types = _types(t)
    st = _values_struct(types)
    body = len(data) - offset
    if body < st.size:
        raise Truncated(f"values need {st.size} bytes, got {body}")
    if body > st.size:
        raise TemplateMismatch(f"{body - st.size} bytes left over: data carries more fields than the template")
    return _unflatten(types, st.unpack_from(data, offset))


def decode_event(data: bytes, t: Template) -> EventRecord:
    _decode_header(data, t)
    values = _decode_values(data, _EVENT_HEADER.size, t)
    return EventRecord(t.event_id, t.template_id, t.issuer, values)


def encode_data(e: EventRecord, t: Template, meta: Meta, zfilter: int = 0) -> bytes:
    check_conforms(e, t)
    return b"".join(
        (
            _EVENT_HEADER.pack(KIND_DATA, e.issuer, e.template_id, e.event_id),
            _META.pack(meta.base_count, meta.period_start, meta.period_end),
            zfilter.to_bytes(ZFILTER_BYTES, "big"),
            encode_values(e, t),
        )
    )


def decode_data(data: bytes, t: Template) -> tuple[EventRecord, Meta, int]:
    _decode_header(data, t)
    off = _EVENT_HEADER.size
    if len(data) < off + _META.size + ZFILTER_BYTES:
        raise Truncated("data message shorter than its meta header")
    meta = Meta(*_META.unpack_from(data, off))
    off += _META.size
    zf = int.from_bytes(data[off : off + ZFILTER_BYTES], "big")
    off += ZFILTER_BYTES
    values = _decode_values(data, off, t)
    return EventRecord(t.event_id, t.template_id, t.issuer, values), meta, zf


# -- compound flow keys -------------------------------------------------------------

FLOW_COMPONENTS = (
    ("rfc791-source-address", "src", AttrType.IPV4ADDR),
    ("rfc791-destination-address", "dst", AttrType.IPV4ADDR),
    ("rfc793-source-port", "sport", AttrType.COUNTER64),
    ("rfc793-destination-port", "dport", AttrType.COUNTER64),
    ("rfc791-protocol", "proto", AttrType.COUNTER64),
)


@dataclass(frozen=True)
class FlowKeySchema:
    """Maps sub-attribute concept ids to flow-key components.

    Components are registered as children of the flow-key attribute
    (``attribute.flow.rfc791-destination-address`` under ``attribute.flow``),
    so a filter on a component can find its compound field by prefix.
    """

    flow_attr: int
    components: dict = field(default_factory=dict)  # component id -> (FlowKey field, AttrType)

    @classmethod
    def register(cls, vocab: VocabularyTree, base: str = "attribute.flow") -> "FlowKeySchema":
        flow_attr = vocab.register(base)
        comps = {}
        for name, fld, ty in FLOW_COMPONENTS:
            comps[vocab.register(f"{base}.{name}")] = (fld, ty)
        return cls(flow_attr, comps)

    def component_type(self, component: int) -> AttrType:
        try:
            return self.components[component][1]
        except KeyError:
            raise UnknownComponent(component) from None

    def __contains__(self, component: int) -> bool:
        return component in self.components


def extract_component(value: FlowKey, component: int, schema: FlowKeySchema) -> Any:
    try:
        fld, _ = schema.components[component]
    except KeyError:
        raise UnknownComponent(component) from None
    return getattr(value, fld)
