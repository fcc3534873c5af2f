import math
import random

import pytest
from hypothesis import given, strategies as st

from disco.overlay import Overlay, closer, hash_key, ring_distance

from . import oracles


def test_ring_distance_is_bidirectional():
    assert ring_distance(1, 2**64 - 1) == 2
    assert ring_distance(5, 5) == 0
    # tie between 0 and 10 for key 5: the smaller id wins
    assert closer(0, 10, 5) and not closer(10, 0, 5)


def test_hash_key_is_stable():
    # frozen: blake2b-64 of the UTF-8 text
    import hashlib

    assert hash_key("topic") == int.from_bytes(hashlib.blake2b(b"topic", digest_size=8).digest(), "big")


@given(st.lists(st.integers(0, 2**64 - 1), min_size=1, max_size=40, unique=True), st.integers(0, 2**64 - 1))
def test_owner_matches_brute_force(ids, key):
    assert Overlay(ids).owner(key) == oracles.closest_id(ids, key)


@given(st.lists(st.integers(0, 2**64 - 1), min_size=2, max_size=40, unique=True), st.data())
def test_every_route_reaches_the_owner(ids, data):
    o = Overlay(ids, leaf_size=2)
    start = data.draw(st.sampled_from(ids))
    key = data.draw(st.integers(0, 2**64 - 1))
    path = o.path(start, key)
    assert path[-1] == oracles.closest_id(ids, key)
    assert len(set(path)) == len(path)
    dists = [ring_distance(n, key) for n in path]
    assert all(a > b or (a == b and n > m) for a, b, n, m in zip(dists, dists[1:], path, path[1:]))


def test_hop_bound_at_64_nodes():
    rng = random.Random(7)
    ids = [rng.getrandbits(64) for _ in range(64)]
    o = Overlay(ids, leaf_size=4)
    bound = math.ceil(math.log2(64)) + 4
    for start in ids:
        for key in ids:
            assert len(o.path(start, key)) - 1 <= bound


def test_route_callbacks():
    o = Overlay([10, 1000, 2**40, 2**63], leaf_size=1)
    seen = []
    hops = o.route(10, 2**63, "m", deliver=lambda n, m: seen.append(("at", n)), per_hop=lambda n, m: seen.append(n))
    assert hops[-1] == 2**63 and seen[-1] == ("at", 2**63)
    stopped = o.route(10, 2**63, "m", per_hop=lambda n, m: False)
    assert len(stopped) == 2 or stopped == hops


def test_single_node_and_bad_arguments():
    o = Overlay([42])
    assert o.path(42, 7) == [42]
    with pytest.raises(ValueError):
        Overlay([])
    with pytest.raises(ValueError):
        Overlay([1], leaf_size=0)
