import pytest
from hypothesis import given, strategies as st

from disco.scenario.config import bundled_vocabulary
from disco.vocabulary import (
    ConceptPattern,
    DepthExceeded,
    LevelExhausted,
    UnknownPath,
    VocabularyError,
    VocabularyTree,
    common_pattern,
    format_id,
    is_ancestor,
    matches,
    parse_id,
)


@pytest.fixture
def vocab():
    return VocabularyTree.from_lines(bundled_vocabulary())


def test_bundled_ids_are_stable(vocab):
    # frozen: allocation order of the shipped bootstrap file
    assert format_id(vocab.id("event.network.drops.forwarding.rfc791-ttl-exceeded")) == "01:01:01:01"
    assert format_id(vocab.id("event.network.drops.congestion.queue-full")) == "01:01:01:02"
    assert format_id(vocab.id("report.intrusion")) == "CA:FE:00:00"
    assert format_id(vocab.id("alarm.failure")) == "DE:AD:00:00"
    assert format_id(vocab.id("attribute.flow.rfc791-destination-address")) == "02:01:02:00"


def test_deep_paths_fold_into_the_last_level(vocab):
    leaf = vocab.id("event.network.drops.forwarding.rfc791-ttl-exceeded")
    assert vocab.name(leaf) == "event.network.drops.forwarding.rfc791-ttl-exceeded"
    strict = VocabularyTree(fold_deep=False)
    with pytest.raises(DepthExceeded):
        strict.register("a.b.c.d.e")


def test_wildcards_become_prefix_patterns(vocab):
    p = vocab.pattern("event.network.drops.*")
    assert p == vocab.pattern("event.network.drops*")
    assert p.prefix_bits == 24
    assert p.matches(vocab.id("event.network.drops.congestion.queue-full"))
    assert not p.matches(vocab.id("event.server.overload.request-cost"))
    assert vocab.pattern("report.intrusion").prefix_bits == 32


def test_register_is_idempotent_and_names_round_trip():
    v = VocabularyTree()
    a = v.register("x.y.z")
    assert v.register("x.y.z") == a
    assert v.name(a) == "x.y.z"
    assert v.children("x") == ["x.y"]
    with pytest.raises(UnknownPath):
        v.id("x.q")


def test_pin_conflicts_are_rejected():
    v = VocabularyTree()
    v.register("a.b", pinned=parse_id("10:20"))
    with pytest.raises(VocabularyError):
        v.register("a.c", pinned=parse_id("11:01"))
    with pytest.raises(VocabularyError):
        v.register("q.r", pinned=parse_id("10:20:30"))


def test_level_exhaustion():
    v = VocabularyTree()
    for i in range(255):
        v.register(f"root.c{i}")
    with pytest.raises(LevelExhausted):
        v.register("root.overflow")


def test_dump_reload_is_identity(vocab):
    again = VocabularyTree.from_lines(vocab.dump().splitlines())
    assert dict(again) == dict(vocab)


@given(st.integers(0, 2**32 - 1))
def test_format_parse_round_trip(cid):
    assert parse_id(format_id(cid)) == cid


@given(st.lists(st.integers(1, 255), min_size=1, max_size=4), st.integers(1, 4))
def test_prefix_of_an_id_matches_it(levels, depth):
    cid = 0
    for i, b in enumerate(levels):
        cid |= b << (24 - 8 * i)
    depth = min(depth, len(levels))
    bits = 8 * depth
    pattern = ConceptPattern(cid & ((1 << 32) - (1 << (32 - bits))), bits)
    assert matches(pattern, cid)
    assert is_ancestor(pattern.id, cid)


def test_common_pattern_is_the_finest_cover(vocab):
    a = vocab.pattern("event.network.drops.forwarding.rfc791-ttl-exceeded")
    b = vocab.pattern("event.network.drops.congestion.queue-full")
    c = common_pattern([a, b])
    assert c == vocab.pattern("event.network.drops.*")
    assert c.covers(a) and c.covers(b)
    with pytest.raises(ValueError):
        common_pattern([a, vocab.pattern("report.intrusion")])
