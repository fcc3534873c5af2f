import random

import pytest

from disco.aggregation import AggregatorOp, FilterConstraint, GranularitySpec
from disco.events import AttrType, EventRecord, FlowKey, FlowKeySchema, Template, ip
from disco.node import Deployment
from disco.overlay import hash_key
from disco.pubsub import InvalidSpec, NotEntitled, SubscriptionSpec, UnknownTemplate, oracle_map
from disco.simnet import MS
from disco.store import LookupQuery
from disco.vocabulary import VocabularyTree
from disco.wire import MsgKind

from . import netgen


class Net:
    def __init__(self, n=20, **kw):
        self.v = VocabularyTree()
        self.drops = self.v.register("event.network.drops.forwarding.ttl")
        self.queue = self.v.register("event.network.drops.congestion.queue-full")
        self.other = self.v.register("event.server.overload.cost")
        self.count = self.v.register("attribute.metric.count")
        self.tag = self.v.register("tag.challenge.ddos")
        self.schema = FlowKeySchema.register(self.v)
        self.dst = self.v.id("attribute.flow.rfc791-destination-address")
        self.ids = [hash_key(f"node-{i}") for i in range(n)]
        self.dep = Deployment(self.ids, vocab=self.v, schema=self.schema, **kw)

    def template(self, node, event_id):
        t = Template(node, self.dep[node].next_template_id(), event_id,
                     ((self.schema.flow_attr, AttrType.FLOWKEY), (self.count, AttrType.COUNTER64)))
        self.dep.publish_template(node, t)
        return t

    def event(self, t, dst="4.2.1.1", count=1):
        return EventRecord(t.event_id, t.template_id, t.issuer, (FlowKey(ip("1.1.1.1"), ip(dst), 1, 80, 6), count))

    def notices(self, node):
        return [(k, topic) for _, k, topic in self.dep[node].notices]


def test_no_subscriber_notice_once_per_topic_then_ready():
    net = Net()
    dep, pub = net.dep, net.ids[3]
    a, b = net.template(pub, net.drops), net.template(pub, net.other)
    for _ in range(5):
        dep.publish(pub, net.event(a))
        dep.publish(pub, net.event(b))
        dep.run()
    ta, tb = oracle_map(net.drops), oracle_map(net.other)
    assert sorted(net.notices(pub)) == sorted([(MsgKind.NO_SUBSCRIBER, ta), (MsgKind.NO_SUBSCRIBER, tb)])
    assert dep.held_back == 8
    got = []
    dep.subscribe(net.ids[7], SubscriptionSpec(net.v.pattern("event.network.drops.*")), got.append)
    dep.run()
    assert net.notices(pub)[-1] == (MsgKind.SUBSCRIBERS_READY, ta)
    assert ta not in dep[pub].suppressed and tb in dep[pub].suppressed
    dep.publish(pub, net.event(a))
    dep.run()
    assert len(got) == 1 and got[0].meta.base_count == 1


def test_count_and_period_triggers():
    net = Net()
    dep, pub, sub = net.dep, net.ids[1], net.ids[9]
    t = net.template(pub, net.drops)
    got = []
    spec = SubscriptionSpec(
        net.v.pattern("event.network.drops.*"),
        (FilterConstraint.prefix(net.dst, "4.2.0.0/16"),),
        granularity=GranularitySpec(3, 500 * MS),
    )
    dep.subscribe(sub, spec, got.append)
    dep.run()
    for i in range(7):
        dep.publish(pub, net.event(t, "4.2.1.1" if i % 2 == 0 else "9.9.9.9", count=i))
    dep.run()
    assert [d.meta.base_count for d in got] == [3, 1]
    assert got[0].event.values[1] == 0 + 2 + 4 and got[1].event.values[1] == 6
    assert got[1].meta.period_end - got[1].meta.period_start == 500 * MS


def test_shared_forwarders_keep_a_valid_tree():
    net = Net(n=40)
    dep = net.dep
    rng = random.Random(5)
    for node in rng.sample(net.ids, 15):
        dep.subscribe(node, SubscriptionSpec(net.v.pattern("event.network.drops.*"), granularity=GranularitySpec(rng.choice((1, 5)))))
    dep.run()
    topic = oracle_map(net.drops)
    root = dep.check_tree(topic)
    assert root == dep.overlay.owner(topic)
    for node in dep.tree(topic):
        assert dep.tree_path(topic, node)[0] == root


def test_reply_elects_contributing_events_only():
    net = Net()
    dep = net.dep
    p1, p2, p3, sub = net.ids[2], net.ids[5], net.ids[11], net.ids[14]
    ts = {p: net.template(p, net.drops) for p in (p1, p2, p3)}
    got = []
    dep.subscribe(sub, SubscriptionSpec(net.v.pattern("event.network.drops.*"), (FilterConstraint.prefix(net.dst, "4.2.0.0/16"),), granularity=GranularitySpec(2, 100 * MS)), got.append)
    dep.run()
    dep.publish(p1, net.event(ts[p1]))
    dep.publish(p2, net.event(ts[p2]))
    dep.publish(p3, net.event(ts[p3], dst="9.9.9.9"))
    dep.run()
    assert [d.meta.base_count for d in got] == [2]
    dep.reply(sub, got[0], [net.tag])
    dep.run()
    stored = list(dep.dws.entries())
    assert sorted(e.event.issuer for e in stored) == sorted((p1, p2))
    assert all(net.tag in e.tags for e in stored)
    hits = []
    dep.lookup(sub, LookupQuery(net.v.pattern("event.network.*"), (FilterConstraint.prefix(net.dst, "4.2.0.0/16"),)), hits.extend)
    dep.run()
    assert sorted(h.event.issuer for h in hits) == sorted((p1, p2))


def test_subscribe_time_validation():
    net = Net(entitlement=lambda node, spec: spec.event_pattern.prefix_bits > 8)
    dep, pub = net.dep, net.ids[0]
    net.template(pub, net.drops)
    with pytest.raises(NotEntitled):
        dep.subscribe(net.ids[1], SubscriptionSpec(net.v.pattern("event.*")))
    with pytest.raises(InvalidSpec):
        dep.subscribe(net.ids[1], SubscriptionSpec(net.v.pattern("event.network.*"), ops={net.schema.flow_attr: AggregatorOp.SUM}, granularity=GranularitySpec(5)))


def test_publish_requires_an_own_template():
    net = Net()
    t = net.template(net.ids[0], net.drops)
    with pytest.raises(UnknownTemplate):
        net.dep.publish(net.ids[1], net.event(t))


@pytest.mark.parametrize("seed", range(5))
def test_random_deployments_conserve_base_events(seed):
    dep, subs, published = netgen.run(seed, events=300)
    assert netgen.check_conservation(subs, published) == []
