
import pytest
from hypothesis import given, strategies as st

from disco.events import AttrType, EventRecord, Meta, Template
from disco.reply import (
    LinkFilters,
    LtsBuffer,
    ReplyMessage,
    annotate,
    contains,
    false_positive_bound,
    popcount,
    reverse_forward,
)


def test_link_filters_have_k_bits_and_are_seeded():
    lf = LinkFilters(256, 4, seed=1)
    assert popcount(lf(1, 2)) == 4
    assert lf(1, 2) == LinkFilters(256, 4, seed=1)(1, 2)
    assert lf(1, 2) != lf(2, 1)
    assert lf.positions(1, 2) == sorted(lf.positions(1, 2))
    with pytest.raises(ValueError):
        LinkFilters(4, 5)


@given(st.lists(st.integers(0, 2**64 - 1), min_size=2, max_size=10, unique=True))
def test_path_filter_contains_each_link(path):
    lf = LinkFilters()
    z = lf.path_filter(path)
    assert all(contains(z, lf(a, b)) for a, b in zip(path, path[1:]))


def test_reverse_forward_picks_stamped_links():
    lf = LinkFilters()
    z = lf.stamp(0, 7, 9)
    assert reverse_forward(9, [5, 7, 8], z, lf) == [7]


def test_false_positive_bound_formula():
    assert false_positive_bound(0) == 0
    assert false_positive_bound(30) == pytest.approx((1 - 2.718281828459045 ** (-120 / 256)) ** 4)


T = Template(1, 1, 0x01010101, ((5, AttrType.COUNTER64),))


def entry_event(v):
    return EventRecord(T.event_id, 1, 1, (v,))


def test_lts_expiry_and_capacity():
    buf = LtsBuffer(ttl=100, capacity=3)
    for i in range(4):
        buf.add(entry_event(i), T, Meta(1, i, i), 0, now=i)
    assert len(buf) == 3 and buf.overwritten == 1
    assert buf.expire(now=103) == 2
    assert [e.event.values[0] for e in buf] == [3]


def test_lts_match_by_event_time_and_constraints():
    from disco.aggregation import FilterConstraint

    buf = LtsBuffer(ttl=1000)
    for i in range(10):
        buf.add(entry_event(i), T, Meta(1, i * 10, i * 10), 0, now=i * 10)
    msg = ReplyMessage(T.event_id, 0, 20, 60, (9,), (FilterConstraint.at_least(5, AttrType.COUNTER64, 4),))
    hits = buf.match(msg, now=100)
    assert [h.event.values[0] for h in hits] == [4, 5, 6]
    assert buf.match(ReplyMessage(0x01010102, 0, 0, 1000), now=100) == []
    elected = annotate(hits, [9])
    assert len(elected) == 3 and annotate(hits, [9]) == []
    with pytest.raises(ValueError):
        ReplyMessage(1, 0, 5, 4)
