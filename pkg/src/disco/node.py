"""Simulated DISco deployment: one node actor per overlay member.

Publications are routed hop by hop to the topic's rendezvous node, which
runs the deliver pipeline and multicasts down the tree. Every forwarder
keeps, per child, the child's spec, the template derived for it from each
input format and the aggregates being built. Data messages collect link
filters as they travel; replies walk those links backwards.
"""
from __future__ import annotations

import logging
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, NamedTuple

from .aggregation import (
    APPLICABLE,
    AggregatorOp,
    PendingAggregate,
    accumulate,
    derive_child_template,
    filter_accepts,
    finalize,
)
from .events import (
    EventRecord,
    FlowKeySchema,
    Meta,
    Template,
    check_conforms,
    data_message_size,
    template_size,
)
from .overlay import Overlay
from .pubsub import (
    InvalidSpec,
    NotEntitled,
    SubscriptionSpec,
    UnknownTemplate,
    align_upstream,
    oracle_map,
    remaining_filters,
    topics_for,
)
from .reply import (
    DEFAULT_LTS_CAPACITY,
    DEFAULT_TTL_MULTIPLE,
    LinkFilters,
    LtsBuffer,
    ReplyMessage,
    annotate,
    reverse_forward,
)
from .simnet import MS, Kernel, Network
from .store import DistributedWorkingStorage, LookupProxy, LookupQuery, ProviderUnavailable, RetentionPolicy
from .vocabulary import VocabularyTree, matches
from .wire import (
    NOTICE_SIZE,
    MsgKind,
    encode_lookup,
    encode_reply,
    lookup_result_size,
    store_size,
    subscribe_size,
)

log = logging.getLogger(__name__)

EARLY_PUBLISHER_CAP = 64
NO_TOPIC = 0


class Delivery(NamedTuple):
    node: int
    topic: int
    event: EventRecord
    template: Template
    meta: Meta
    zfilter: int


@dataclass
class LocalSubscription:
    node: int
    spec: SubscriptionSpec
    on_data: Callable[[Delivery], None] | None = None
    on_template: Callable[[Template], None] | None = None
    topics: tuple[int, ...] = ()
    deliveries: int = 0
    base_events: int = 0

    @property
    def key(self) -> tuple:
        return ("local", self.spec.event_pattern.id, self.spec.event_pattern.prefix_bits)


class ChildOutput:
    __slots__ = ("template", "picks", "ops", "announced")

    def __init__(self, template: Template, picks, ops):
        self.template = template
        self.picks = picks
        self.ops = ops
        self.announced = False


@dataclass
class ChildState:
    spec: SubscriptionSpec
    outputs: dict = field(default_factory=dict)  # input signature -> ChildOutput
    pending: dict = field(default_factory=dict)  # input signature -> PendingAggregate


@dataclass
class ForwarderState:
    topic: int
    parent: int | None
    children: dict = field(default_factory=dict)  # node id or local key -> ChildState
    upstream: SubscriptionSpec | None = None

    @property
    def is_root(self) -> bool:
        return self.parent is None


class DiscoNode:
    def __init__(self, dep: "Deployment", node_id: int):
        self.dep = dep
        self.id = node_id
        self.forwarders: dict[int, ForwarderState] = {}
        self.templates: dict[tuple[int, int], Template] = {}
        self.own_templates: dict[int, Template] = {}
        self.held: dict[tuple[int, int], list] = {}
        self.suppressed: set[int] = set()
        self.early: dict[int, OrderedDict] = {}
        self.notified: set[tuple[int, int]] = set()
        self.upstream: dict[int, set[int]] = {}
        self.lts = LtsBuffer(dep.lts_ttl, dep.lts_capacity)
        self.local: dict[tuple, LocalSubscription] = {}
        self.seen_replies: set = set()
        self.notices: list[tuple[int, MsgKind, int]] = []
        self._next_tid = 1

    def __repr__(self):
        return f"DiscoNode({self.dep.name(self.id)})"

    def next_template_id(self) -> int:
        tid = self._next_tid
        if tid > 0xFFFF:
            raise RuntimeError(f"node {self.id:x} ran out of template ids")
        self._next_tid += 1
        return tid

    # -- publishing -------------------------------------------------------------------

    def publish_template(self, t: Template) -> None:
        if t.issuer != self.id:
            raise ValueError("templates must be issued by the publishing node")
        self.own_templates[t.template_id] = t
        self.templates[t.key] = t
        self.dep.learn_types(t)
        self._template_up(oracle_map(t.event_id), t)

    def publish(self, e: EventRecord) -> None:
        t = self.own_templates.get(e.template_id)
        if t is None or e.issuer != self.id:
            raise UnknownTemplate(f"template {e.template_id} not published by node {self.id:x}")
        check_conforms(e, t)
        now = self.dep.kernel.now
        meta = Meta(1, now, now)
        self.lts.add(e, t, meta, 0, now)
        topic = oracle_map(e.event_id)
        self.dep.published[topic] += 1
        if topic in self.suppressed:
            self.dep.held_back += 1
            return
        self._data_up(topic, e, meta, 0, data_message_size(t))

    def _template_up(self, topic: int, t: Template) -> None:
        nxt = self.dep.overlay.next_hop(self.id, topic)
        if nxt is None:
            self._learn_template(t)
            return
        self.dep.send(self.id, nxt, MsgKind.TEMPLATE, topic, template_size(t), self.dep.nodes[nxt].on_template_up, t)

    def on_template_up(self, sender: int, topic: int, t: Template) -> None:
        self._template_up(topic, t)

    def _data_up(self, topic: int, e: EventRecord, meta: Meta, z: int, size: int) -> None:
        nxt = self.dep.overlay.next_hop(self.id, topic)
        if nxt is None:
            self._root_data(topic, e, meta, z)
            return
        z = self.dep.links.stamp(z, self.id, nxt)
        self.dep.send(self.id, nxt, MsgKind.DATA, topic, size, self.dep.nodes[nxt].on_data_up, e, meta, z, size)

    def on_data_up(self, sender: int, topic: int, e: EventRecord, meta: Meta, z: int, size: int) -> None:
        self.upstream.setdefault(topic, set()).add(sender)
        self._data_up(topic, e, meta, z, size)

    def _learn_template(self, t: Template) -> None:
        self.templates[t.key] = t
        for topic, e, meta, z, from_root in self.held.pop(t.key, ()):
            if from_root:
                self._root_data(topic, e, meta, z)
            else:
                self._tree_data(topic, e, meta, z)

    def _root_data(self, topic: int, e: EventRecord, meta: Meta, z: int) -> None:
        t = self.templates.get((e.issuer, e.template_id))
        if t is None:
            self.held.setdefault((e.issuer, e.template_id), []).append((topic, e, meta, z, True))
            return
        fs = self.forwarders.get(topic)
        if fs is None or not fs.children:
            self._early_publisher(topic, e.issuer)
            return
        self.pipeline(fs, e, t, meta, z)

    def _early_publisher(self, topic: int, publisher: int) -> None:
        early = self.early.setdefault(topic, OrderedDict())
        early[publisher] = True
        early.move_to_end(publisher)
        while len(early) > EARLY_PUBLISHER_CAP:
            early.popitem(last=False)
        if (topic, publisher) in self.notified:
            return
        self.notified.add((topic, publisher))
        self.dep.notice(self.id, publisher, MsgKind.NO_SUBSCRIBER, topic)

    def on_notice(self, sender: int, topic: int, kind: MsgKind) -> None:
        self.notices.append((self.dep.kernel.now, kind, topic))
        if kind is MsgKind.NO_SUBSCRIBER:
            self.suppressed.add(topic)
        else:
            self.suppressed.discard(topic)

    # -- tree maintenance -------------------------------------------------------------

    def subscribe_local(self, sub: LocalSubscription) -> None:
        self.local[sub.key] = sub
        for topic in sub.topics:
            self.add_child(topic, sub.key, sub.spec)

    def on_subscribe(self, sender: int, topic: int, spec: SubscriptionSpec) -> None:
        self.add_child(topic, sender, spec)

    def add_child(self, topic: int, key: Hashable, spec: SubscriptionSpec) -> None:
        fs = self.forwarders.get(topic)
        if fs is None:
            fs = self.forwarders[topic] = ForwarderState(topic, self.dep.overlay.next_hop(self.id, topic))
        old = fs.children.get(key)
        if old is not None:
            if old.spec == spec:
                return
            self._flush_child(fs, key, old)
        was_empty = not fs.children
        fs.children[key] = ChildState(spec)
        up = align_upstream([c.spec for c in fs.children.values()])
        if up == fs.upstream:
            return
        fs.upstream = up
        if fs.is_root:
            if was_empty:
                self._subscribers_ready(topic)
        else:
            self.dep.send(
                self.id, fs.parent, MsgKind.SUBSCRIBE, topic, subscribe_size(up),
                self.dep.nodes[fs.parent].on_subscribe, up,
            )

    def _subscribers_ready(self, topic: int) -> None:
        for publisher in self.early.pop(topic, {}):
            self.notified.discard((topic, publisher))
            self.dep.notice(self.id, publisher, MsgKind.SUBSCRIBERS_READY, topic)

    # -- deliver pipeline -------------------------------------------------------------

    def _tree_data(self, topic: int, e: EventRecord, meta: Meta, z: int) -> None:
        t = self.templates.get((e.issuer, e.template_id))
        if t is None:
            self.held.setdefault((e.issuer, e.template_id), []).append((topic, e, meta, z, False))
            return
        fs = self.forwarders.get(topic)
        if fs is not None:
            self.pipeline(fs, e, t, meta, z)

    def on_tree_template(self, sender: int, topic: int, t: Template) -> None:
        self._learn_template(t)

    def on_tree_data(self, sender: int, topic: int, e: EventRecord, meta: Meta, z: int) -> None:
        self.upstream.setdefault(topic, set()).add(sender)
        self._tree_data(topic, e, meta, z)

    def pipeline(self, fs: ForwarderState, e: EventRecord, t: Template, meta: Meta, z: int) -> None:
        dep = self.dep
        now = dep.kernel.now
        enforced = None if fs.is_root else fs.upstream
        for key, child in list(fs.children.items()):
            spec = child.spec
            if not matches(spec.event_pattern, e.event_id):
                continue
            todo = remaining_filters(spec, enforced)
            if todo and not filter_accepts(e, t, todo, dep.schema):
                continue
            # pass aggregates straight on when the parent already built them to this spec
            direct = spec.passthrough or (
                enforced is not None and spec.granularity == enforced.granularity and spec.ops == enforced.ops
            )
            out = self._output(fs, key, child, t, direct)
            if direct:
                values = tuple(e.values[i] for i in out.picks)
                ot = out.template
                self._emit(fs, key, EventRecord(ot.event_id, ot.template_id, ot.issuer, values), ot, meta, z)
                continue
            g = spec.granularity
            sig = t.signature
            w = meta.base_count
            pend = child.pending.get(sig)
            if pend is not None and g.max_events is not None and pend.base_count + w > g.max_events:
                self._flush(fs, key, child, sig)
                pend = None
            if pend is None:
                pend = child.pending[sig] = PendingAggregate(out.template, out.picks, out.ops, now)
                if g.max_period is not None:
                    pend.timer = dep.kernel.after(g.max_period, self._on_timer, fs.topic, key, sig, pend, late=True)
            accumulate(pend, e, w, z)
            if g.max_events is not None and pend.base_count >= g.max_events:
                self._flush(fs, key, child, sig)

    def _output(self, fs: ForwarderState, key, child: ChildState, t: Template, direct: bool) -> ChildOutput:
        out = child.outputs.get((t.signature, direct))
        if out is None:
            spec = child.spec
            ops = {a: AggregatorOp.FIRST for a in t.attr_ids} if direct else spec.op_map
            tmpl, picks, resolved = derive_child_template(
                t, spec.discards, issuer=self.id, template_id=self.next_template_id(), ops=ops
            )
            out = child.outputs[t.signature, direct] = ChildOutput(tmpl, picks, resolved)
        if not out.announced:
            out.announced = True
            if isinstance(key, tuple):
                sub = self.local.get(key)
                if sub is not None and sub.on_template is not None:
                    sub.on_template(out.template)
            else:
                self.dep.send(
                    self.id, key, MsgKind.TEMPLATE, fs.topic, template_size(out.template),
                    self.dep.nodes[key].on_tree_template, out.template,
                )
        return out

    def _on_timer(self, topic, key, sig, pend) -> None:
        fs = self.forwarders.get(topic)
        child = fs.children.get(key) if fs else None
        if child is not None and child.pending.get(sig) is pend:
            self._flush(fs, key, child, sig)

    def _flush(self, fs: ForwarderState, key, child: ChildState, sig) -> None:
        pend = child.pending.pop(sig)
        self.dep.kernel.cancel(pend.timer)
        record, meta = finalize(pend, self.dep.kernel.now)
        self._emit(fs, key, record, pend.template, meta, pend.zfilter)

    def _flush_child(self, fs: ForwarderState, key, child: ChildState) -> None:
        for sig in list(child.pending):
            self._flush(fs, key, child, sig)

    def flush_all(self) -> None:
        for fs in self.forwarders.values():
            for key, child in list(fs.children.items()):
                self._flush_child(fs, key, child)

    def _emit(self, fs: ForwarderState, key, e: EventRecord, t: Template, meta: Meta, z: int) -> None:
        dep = self.dep
        if isinstance(key, tuple):
            sub = self.local.get(key)
            if sub is None:
                return
            sub.deliveries += 1
            sub.base_events += meta.base_count
            dep.delivered[fs.topic] += 1
            if sub.on_data is not None:
                sub.on_data(Delivery(self.id, fs.topic, e, t, meta, z))
            return
        z = dep.links.stamp(z, self.id, key)
        dep.send(
            self.id, key, MsgKind.DATA, fs.topic, data_message_size(t),
            dep.nodes[key].on_tree_data, e, meta, z,
        )

    # -- replies ----------------------------------------------------------------------

    def on_reply(self, sender: int, topic: int, msg: ReplyMessage) -> None:
        if msg in self.seen_replies:
            return
        self.seen_replies.add(msg)
        dep = self.dep
        now = dep.kernel.now
        matched = self.lts.match(msg, now, dep.schema)
        for entry in annotate(matched, msg.tags):
            dep.elect(self.id, entry.event, entry.template, entry.meta, sorted(entry.tags))
        dep.reply_visits[self.id] += 1
        for up in reverse_forward(self.id, self.upstream.get(topic, ()), msg.zfilter, dep.links):
            dep.send(self.id, up, MsgKind.REPLY, topic, len(encode_reply(msg)), dep.nodes[up].on_reply, msg)


class Deployment:
    """All nodes of one simulated domain plus the shared kernel and store."""

    def __init__(
        self,
        node_ids: Iterable[int],
        *,
        kernel: Kernel | None = None,
        network: Network | None = None,
        vocab: VocabularyTree | None = None,
        schema: FlowKeySchema | None = None,
        links: LinkFilters | None = None,
        leaf_size: int = 4,
        edge_latency: int = 10 * MS,
        ttl_multiple: int = DEFAULT_TTL_MULTIPLE,
        lts_capacity: int = DEFAULT_LTS_CAPACITY,
        retention: RetentionPolicy | None = None,
        bucket_width: int | None = None,
        entitlement: Callable[[int, SubscriptionSpec], bool] | None = None,
        names: dict[int, str] | None = None,
    ):
        self.kernel = kernel or Kernel()
        self.network = network or Network(self.kernel)
        self.overlay = Overlay(node_ids, leaf_size)
        self.vocab = vocab
        self.schema = schema
        self.links = links or LinkFilters()
        self.lts_ttl = ttl_multiple * edge_latency
        self.lts_capacity = lts_capacity
        self.entitlement = entitlement
        self.names = dict(names or {})
        kw = {} if bucket_width is None else {"bucket_width": bucket_width}
        self.dws = DistributedWorkingStorage(self.overlay.owner, self.overlay.ids, retention, schema=schema, **kw)
        self.proxy = LookupProxy(self.dws)
        self.nodes = {n: DiscoNode(self, n) for n in self.overlay.ids}
        for n in self.overlay.ids:
            self.network.add_node(n)
        self.attr_types: dict[int, object] = {}
        self.msgs: Counter = Counter()  # (topic, kind) -> messages
        self.topic_bytes: Counter = Counter()  # (topic, kind, src, dst) -> bytes
        self.published: Counter = Counter()
        self.delivered: Counter = Counter()
        self.reply_visits: Counter = Counter()
        self.elections = 0
        self.held_back = 0
        self._next_query = 1

    def name(self, node: int) -> str:
        return self.names.get(node, f"{node:016x}")

    def __getitem__(self, node: int) -> DiscoNode:
        return self.nodes[node]

    # -- messaging --------------------------------------------------------------------

    def send(self, src: int, dst: int, kind: MsgKind, topic: int, nbytes: int, handler, *args) -> None:
        self.msgs[topic, kind] += 1
        self.topic_bytes[topic, kind, src, dst] += nbytes
        self.network.send(src, dst, nbytes, self._arrive, src, dst, kind, topic, nbytes, handler, args)

    def _arrive(self, src, dst, kind, topic, nbytes, handler, args) -> None:
        self.kernel.trace(self.name(dst), kind.name, f"from={self.name(src)} topic={topic:016x} bytes={nbytes}")
        handler(src, topic, *args)

    def notice(self, src: int, dst: int, kind: MsgKind, topic: int) -> None:
        self.send(src, dst, kind, topic, NOTICE_SIZE, self._notice_arrived, dst, kind)

    def _notice_arrived(self, sender, topic, dst, kind) -> None:
        self.nodes[dst].on_notice(sender, topic, kind)

    def route(self, src: int, key: int, kind: MsgKind, nbytes: int, deliver, *args) -> None:
        """Send hop by hop along the overlay path to the owner of ``key``."""
        self._route_step(src, src, key, kind, nbytes, deliver, args)

    def _route_step(self, sender, node, key, kind, nbytes, deliver, args) -> None:
        nxt = self.overlay.next_hop(node, key)
        if nxt is None:
            deliver(node, *args)
            return
        self.send(node, nxt, kind, NO_TOPIC, nbytes, self._route_arrive, nxt, key, kind, nbytes, deliver, args)

    def _route_arrive(self, sender, topic, node, key, kind, nbytes, deliver, args) -> None:
        self._route_step(sender, node, key, kind, nbytes, deliver, args)

    # -- API --------------------------------------------------------------------------

    def learn_types(self, t: Template) -> None:
        for a, ty in t.fields:
            self.attr_types.setdefault(a, ty)

    def publish_template(self, node: int, t: Template) -> None:
        self.nodes[node].publish_template(t)

    def publish(self, node: int, e: EventRecord) -> None:
        self.nodes[node].publish(e)

    def validate(self, node: int, spec: SubscriptionSpec) -> None:
        if self.entitlement is not None and not self.entitlement(node, spec):
            raise NotEntitled(f"node {self.name(node)} may not subscribe to {spec.event_pattern}")
        for attr, op in spec.ops:
            ty = self.attr_types.get(attr)
            if ty is not None and ty not in APPLICABLE[op]:
                raise InvalidSpec(f"{op.name} is not defined for {ty.name} attribute {attr:08x}")

    def subscribe(
        self,
        node: int,
        spec: SubscriptionSpec,
        on_data: Callable[[Delivery], None] | None = None,
        on_template: Callable[[Template], None] | None = None,
    ) -> LocalSubscription:
        """Subscribe ``node``; a second call with the same pattern replaces the first."""
        self.validate(node, spec)
        topics = tuple(topics_for(spec.event_pattern, self.vocab))
        sub = LocalSubscription(node, spec, on_data, on_template, topics)
        self.nodes[node].subscribe_local(sub)
        return sub

    def reply(
        self,
        node: int,
        delivery: Delivery,
        tags: Iterable[int],
        constraints=(),
        time_from: int | None = None,
        time_to: int | None = None,
    ) -> ReplyMessage:
        """Annotate the base events behind ``delivery``.

        The default time window reaches back one LTS lifetime before the
        aggregate's period, covering base events still travelling when the
        aggregate was opened.
        """
        m = delivery.meta
        lo = max(0, m.period_start - self.lts_ttl) if time_from is None else time_from
        hi = m.period_end if time_to is None else time_to
        msg = ReplyMessage(delivery.event.event_id, delivery.zfilter, lo, hi, tuple(sorted(set(tags))), tuple(constraints))
        self.nodes[node].on_reply(node, delivery.topic, msg)
        return msg

    def elect(self, node: int, event: EventRecord, template: Template, meta: Meta, tags) -> None:
        self.elections += 1
        key = self.dws.partition_key(event.event_id, meta.period_start)
        self.route(node, key, MsgKind.STORE, store_size(template, len(tags)), self._store_at, event, template, meta, tags)

    def _store_at(self, owner: int, event, template, meta, tags) -> None:
        topic = oracle_map(event.event_id)
        subs = sum(
            1 for n in self.nodes.values() for sub in n.local.values() if topic in sub.topics
            and matches(sub.spec.event_pattern, event.event_id)
        )
        self.dws.insert(event, template, meta, self.kernel.now, tags, subscribers=subs)

    def lookup(self, node: int, query: LookupQuery, callback: Callable[[list], None]) -> int:
        """Fan ``query`` out to the DWS owners, merge, add legacy results, call back."""
        qid = self._next_query
        self._next_query += 1
        owners = self.dws.owners_for(query)
        state = {"left": len(owners), "hits": []}
        size = len(encode_lookup(qid, query.event_pattern, query.time_from, query.time_to, query.attr_ranges))

        def answer(owner):
            hits = self.dws.query_shard(owner, query, self.kernel.now)
            self.route(owner, node, MsgKind.LOOKUP_RESULT, lookup_result_size([h.template for h in hits]), collect, hits)

        def collect(_node, hits):
            state["hits"].extend(hits)
            state["left"] -= 1
            if state["left"] == 0:
                found = state["hits"]
                seen = {h.key for h in found}
                try:
                    legacy = self.proxy.legacy_lookup(query)
                except ProviderUnavailable as exc:
                    log.warning("lookup %d: legacy store skipped: %s", qid, exc)
                    legacy = []
                for rec in legacy:
                    if rec.key not in seen:
                        seen.add(rec.key)
                        found.append(rec)
                callback(found)

        if not owners:
            callback([])
        for owner in owners:
            self.route(node, owner, MsgKind.LOOKUP, size, lambda _o, o=owner: answer(o))
        return qid

    def schedule_sweeps(self, interval: int, until: int) -> None:
        def sweep():
            for n in self.overlay.ids:
                self.dws.sweep(n, self.kernel.now)
            if self.kernel.now + interval <= until:
                self.kernel.after(interval, sweep)

        self.kernel.after(interval, sweep)

    # -- running and inspection -------------------------------------------------------

    def run(self, until: int | None = None) -> int:
        return self.kernel.run(until)

    def flush_all(self) -> None:
        """Force out every pending aggregate, then drain the queue."""
        while True:
            for n in self.overlay.ids:
                self.nodes[n].flush_all()
            self.kernel.run()
            if not any(c.pending for n in self.nodes.values() for fs in n.forwarders.values() for c in fs.children.values()):
                return

    def tree(self, topic: int) -> dict[int, int | None]:
        """node -> parent for every forwarder of ``topic``."""
        return {n.id: n.forwarders[topic].parent for n in self.nodes.values() if topic in n.forwarders}

    def check_tree(self, topic: int) -> int:
        """Validate parent/child links of ``topic``; return the root."""
        tree = self.tree(topic)
        roots = [n for n, p in tree.items() if p is None]
        if len(roots) != 1:
            raise AssertionError(f"expected one root, found {len(roots)}")
        root = roots[0]
        if root != self.overlay.owner(topic):
            raise AssertionError("root is not the rendezvous node")
        for n, p in tree.items():
            seen = {n}
            while p is not None:
                if p in seen or p not in tree:
                    raise AssertionError(f"broken parent chain at {self.name(n)}")
                seen.add(p)
                p = tree[p]
            parent = tree[n]
            if parent is not None and n not in self.nodes[parent].forwarders[topic].children:
                raise AssertionError(f"{self.name(n)} missing from its parent's children")
        return root

    def tree_path(self, topic: int, node: int) -> list[int]:
        """Forwarders from the root down to ``node``."""
        tree = self.tree(topic)
        path = [node]
        while tree[path[-1]] is not None:
            path.append(tree[path[-1]])
        return path[::-1]

    def stretch(self, topic: int, publisher: int, subscriber: int) -> float:
        up = len(self.overlay.path(publisher, topic)) - 1
        down = len(self.tree_path(topic, subscriber)) - 1
        direct = len(self.overlay.path(publisher, subscriber)) - 1
        return (up + down) / max(direct, 1)

    def path_bytes(self, topic: int, node: int, kinds=(MsgKind.DATA, MsgKind.TEMPLATE)) -> int:
        path = self.tree_path(topic, node)
        return sum(self.topic_bytes[topic, k, a, b] for a, b in zip(path, path[1:]) for k in kinds)
