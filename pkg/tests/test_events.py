import pytest
from hypothesis import given

from disco.events import (
    AttrType,
    CodecError,
    EventRecord,
    FlowKey,
    FlowKeySchema,
    Meta,
    Prefix,
    Template,
    TemplateMismatch,
    Truncated,
    UnknownComponent,
    UnknownTypeTag,
    data_message_size,
    decode_data,
    decode_event,
    decode_template,
    encode_data,
    encode_event,
    encode_template,
    extract_component,
    ip,
    ip_str,
    template_size,
)
from disco.vocabulary import VocabularyTree

from . import oracles
from .strategies import metas, template_and_event, templates, zfilters

DROPS = Template(
    issuer=0x0102030405060708,
    template_id=7,
    event_id=0x01010101,
    fields=((0x02010000, AttrType.FLOWKEY), (0x02020100, AttrType.NODELOC), (0x02030100, AttrType.TIMESTAMP)),
)
DROP_EVENT = EventRecord(
    DROPS.event_id, 7, DROPS.issuer,
    (FlowKey(ip("10.0.0.1"), ip("4.2.9.9"), 40000, 80, 6), 0xAABBCCDDEEFF0011, 5_000_000),
)

# frozen from the layout, see oracles.template_bytes / oracles.data_bytes
GOLDEN_TEMPLATE = bytes.fromhex(
    "02" "0102030405060708" "0007" "01010101" "0003"
    "0201000007" "0202010008" "0203010004"
)
GOLDEN_DATA = bytes.fromhex(
    "03" "0102030405060708" "0007" "01010101"
    "0000000a" "00000000004c4b40" "00000000004d83c0"
    + "00" * 31 + "81"
    + "0a000001" "04020909" "9c40" "0050" "06"
    "aabbccddeeff0011" "00000000004c4b40"
)


def test_golden_template_bytes():
    assert GOLDEN_TEMPLATE == oracles.template_bytes(DROPS.issuer, 7, DROPS.event_id, [(a, int(t)) for a, t in DROPS.fields])
    assert encode_template(DROPS) == GOLDEN_TEMPLATE
    assert decode_template(GOLDEN_TEMPLATE) == DROPS
    assert template_size(DROPS) == 17 + 5 * 3 == len(GOLDEN_TEMPLATE)


def test_golden_data_bytes():
    meta = Meta(10, 5_000_000, 5_080_000)
    z = (1 << 7) | 1
    values = bytes.fromhex("0a000001040209099c40005006") + oracles.u64(0xAABBCCDDEEFF0011) + oracles.u64(5_000_000)
    assert GOLDEN_DATA == oracles.data_bytes(DROPS.issuer, 7, DROPS.event_id, 10, 5_000_000, 5_080_000, z, values)
    assert encode_data(DROP_EVENT, DROPS, meta, z) == GOLDEN_DATA
    assert decode_data(GOLDEN_DATA, DROPS) == (DROP_EVENT, meta, z)
    assert data_message_size(DROPS) == len(GOLDEN_DATA)


@given(template_and_event(), metas, zfilters)
def test_round_trip(te, meta, z):
    t, e = te
    assert decode_template(encode_template(t)) == t
    assert decode_event(encode_event(e, t), t) == e
    data = encode_data(e, t, meta, z)
    assert len(data) == data_message_size(t)
    assert decode_data(data, t) == (e, meta, z)


@given(templates(max_fields=4))
def test_truncated_templates_are_rejected(t):
    raw = encode_template(t)
    for cut in range(len(raw)):
        with pytest.raises(Truncated):
            decode_template(raw[:cut])


def test_unknown_type_tag():
    raw = bytearray(encode_template(DROPS))
    raw[-1] = 0x7F
    with pytest.raises(UnknownTypeTag):
        decode_template(bytes(raw))


def test_trailing_bytes_and_wrong_kind():
    with pytest.raises(CodecError):
        decode_template(GOLDEN_TEMPLATE + b"\x00")
    with pytest.raises(CodecError):
        decode_template(b"\x03" + GOLDEN_TEMPLATE[1:])
    with pytest.raises(TemplateMismatch):
        decode_data(GOLDEN_DATA + b"\x00", DROPS)


def test_event_must_reference_its_template():
    other = Template(DROPS.issuer, 8, DROPS.event_id, DROPS.fields)
    with pytest.raises(TemplateMismatch):
        encode_event(DROP_EVENT, other)
    with pytest.raises(TemplateMismatch):
        decode_data(GOLDEN_DATA, other)
    short = EventRecord(DROPS.event_id, 7, DROPS.issuer, DROP_EVENT.values[:2])
    with pytest.raises(TemplateMismatch):
        encode_event(short, DROPS)


def test_duplicate_attributes_are_rejected():
    with pytest.raises(ValueError):
        Template(1, 1, 1, ((5, AttrType.COUNTER64), (5, AttrType.GAUGE64)))


def test_prefix_and_addresses():
    p = Prefix.parse("4.2.0.0/16")
    assert p.contains(ip("4.2.200.1")) and not p.contains(ip("4.3.0.0"))
    assert str(p) == "4.2.0.0/16"
    assert ip_str(ip("192.0.2.7")) == "192.0.2.7"


def test_flow_components():
    v = VocabularyTree()
    schema = FlowKeySchema.register(v)
    dst = v.id("attribute.flow.rfc791-destination-address")
    flow = DROP_EVENT.values[0]
    assert extract_component(flow, dst, schema) == ip("4.2.9.9")
    assert extract_component(flow, v.id("attribute.flow.rfc793-destination-port"), schema) == 80
    with pytest.raises(UnknownComponent):
        extract_component(flow, v.register("attribute.other"), schema)
