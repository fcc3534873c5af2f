import math
import warnings

import pytest
from hypothesis import given, strategies as st

from disco.aggregation import (
    AggregatorOp,
    AllFieldsDiscarded,
    AnyOf,
    FilterConstraint,
    GranularitySpec,
    InvalidAggregator,
    MissingAttribute,
    PendingAggregate,
    accumulate,
    derive_child_template,
    eval_filter,
    filter_accepts,
    finalize,
    resolve_ops,
)
from disco.events import AttrType, EventRecord, FlowKey, FlowKeySchema, Prefix, Template, ip
from disco.vocabulary import VocabularyTree

from . import oracles

COUNT, COST, WHEN, WHO = 0x10000000, 0x20000000, 0x30000000, 0x40000000
T = Template(9, 1, 0x01000000, ((COUNT, AttrType.COUNTER64), (COST, AttrType.FLOAT64), (WHEN, AttrType.TIMESTAMP), (WHO, AttrType.NODELOC)))


def ev(count, cost, when, who=1):
    return EventRecord(T.event_id, 1, 9, (count, cost, when, who))


def fresh(ops, discards=()):
    child, picks, resolved = derive_child_template(T, discards, issuer=2, template_id=5, ops=ops)
    return PendingAggregate(child, picks, resolved, period_start=0)


def test_default_operators():
    assert resolve_ops(T.fields, None) == (AggregatorOp.SUM, AggregatorOp.MEAN, AggregatorOp.MIN, AggregatorOp.FIRST)


def test_inapplicable_operator():
    with pytest.raises(InvalidAggregator):
        resolve_ops(T.fields, {WHO: AggregatorOp.SUM})
    assert resolve_ops(T.fields, {WHO: AggregatorOp.SUM}, strict=False)[3] is AggregatorOp.FIRST


def test_derived_template_types_follow_operators():
    child, picks, ops = derive_child_template(T, {WHEN}, issuer=2, template_id=5, ops={COUNT: AggregatorOp.MEAN, WHO: AggregatorOp.COUNT})
    assert picks == (0, 1, 3)
    assert child.fields == ((COUNT, AttrType.FLOAT64), (COST, AttrType.FLOAT64), (WHO, AttrType.COUNTER64))
    assert child.key == (2, 5) and child.event_id == T.event_id


def test_discarding_everything_warns():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        child, _, _ = derive_child_template(T, {COUNT, COST, WHEN, WHO}, issuer=2, template_id=5)
    assert child.fields == ()
    assert any(issubclass(w.category, AllFieldsDiscarded) for w in caught)


def test_aggregate_of_three():
    agg = fresh({WHO: AggregatorOp.LAST})
    for i, (c, cost, t) in enumerate([(3, 1.0, 50), (4, 2.0, 20), (5, 6.0, 70)]):
        accumulate(agg, ev(c, cost, t, who=i), zfilter=1 << i)
    e, meta = finalize(agg, now=99)
    assert e.values == (12, 3.0, 20, 2)
    assert (meta.base_count, meta.period_start, meta.period_end) == (3, 0, 99)
    assert agg.zfilter == 0b111


def test_weighted_accumulation_matches_flat():
    # two pre-aggregates re-aggregated upstream give the flat result
    lo, hi = fresh({COST: AggregatorOp.MEAN}), fresh({COST: AggregatorOp.MEAN})
    base = [(1, 1.0, 5), (2, 2.0, 6), (3, 4.0, 7), (4, 8.0, 8), (5, 16.0, 9)]
    for b in base[:2]:
        accumulate(lo, ev(*b))
    for b in base[2:]:
        accumulate(hi, ev(*b))
    top = fresh({COST: AggregatorOp.MEAN})
    for part in (lo, hi):
        e, meta = finalize(part, 10)
        accumulate(top, EventRecord(T.event_id, 1, 9, e.values), weight=meta.base_count)
    e, meta = finalize(top, 11)
    assert meta.base_count == 5
    assert e.values[0] == oracles.flat_aggregate("SUM", [b[0] for b in base])
    assert e.values[1] == pytest.approx(oracles.flat_aggregate("MEAN", [b[1] for b in base]), rel=1e-15)
    assert e.values[2] == 5


@given(st.lists(st.tuples(st.integers(0, 2**40), st.floats(-1e6, 1e6), st.integers(0, 2**40)), min_size=1, max_size=50))
def test_flat_operators(rows):
    for op, idx, name in ((AggregatorOp.SUM, 0, "SUM"), (AggregatorOp.MAX, 2, "MAX"), (AggregatorOp.MIN, 2, "MIN")):
        attr = T.fields[idx][0]
        agg = fresh({attr: op})
        for r in rows:
            accumulate(agg, ev(*r))
        e, meta = finalize(agg, 0)
        assert e.values[idx] == oracles.flat_aggregate(name, [r[idx] for r in rows])
        assert meta.base_count == len(rows)
    agg = fresh({COST: AggregatorOp.MEAN})
    for r in rows:
        accumulate(agg, ev(*r))
    e, _ = finalize(agg, 0)
    assert math.isclose(e.values[1], oracles.flat_aggregate("MEAN", [r[1] for r in rows]), rel_tol=1e-9, abs_tol=1e-6)


def test_empty_and_bad_weights():
    agg = fresh(None)
    with pytest.raises(ValueError):
        finalize(agg, 0)
    with pytest.raises(ValueError):
        accumulate(agg, ev(1, 1.0, 1), weight=0)


def test_granularity_validation():
    assert GranularitySpec(1).passthrough
    assert not GranularitySpec(None, 500).passthrough
    for bad in ((None, None), (0, None), (None, 0)):
        with pytest.raises(ValueError):
            GranularitySpec(*bad)


def test_filters_and_flow_components():
    v = VocabularyTree()
    schema = FlowKeySchema.register(v)
    dst = v.id("attribute.flow.rfc791-destination-address")
    t = Template(1, 1, 5, ((schema.flow_attr, AttrType.FLOWKEY), (COUNT, AttrType.COUNTER64)))
    e = EventRecord(5, 1, 1, (FlowKey(ip("1.1.1.1"), ip("4.2.3.4"), 1, 80, 6), 7))
    victim = FilterConstraint.prefix(dst, "4.2.0.0/16")
    assert eval_filter(e, t, [victim, FilterConstraint.between(COUNT, AttrType.COUNTER64, 5, 9)], schema)
    assert not eval_filter(e, t, [FilterConstraint.at_least(COUNT, AttrType.COUNTER64, 8)], schema)
    either = AnyOf(dst, ((FilterConstraint.prefix(dst, "7.7.0.0/16"),), (victim,)))
    assert eval_filter(e, t, [either], schema)
    with pytest.raises(MissingAttribute):
        eval_filter(e, t, [FilterConstraint.equals(WHO, AttrType.NODELOC, 1)], schema)
    assert not filter_accepts(e, t, [FilterConstraint.equals(WHO, AttrType.NODELOC, 1)], schema)


def test_prefix_filter_on_prefix_values():
    c = FilterConstraint.prefix(1, "4.0.0.0/8", AttrType.IPV4PREFIX)
    assert c.check(Prefix.parse("4.2.0.0/16"))
    assert not c.check(Prefix.parse("4.0.0.0/7"))


def test_constraint_validation():
    with pytest.raises(ValueError):
        FilterConstraint.between(1, AttrType.COUNTER64, 5, 4)
    with pytest.raises(ValueError):
        FilterConstraint.at_least(1, AttrType.FLOWKEY, 0)
    with pytest.raises(ValueError):
        FilterConstraint.prefix(1, "4.0.0.0/8", AttrType.COUNTER64)
