"""Builds the scenario world, runs it and collects metrics."""
from __future__ import annotations

import bisect
import json
import logging
import random
from typing import TextIO

from ..events import AttrType, FlowKeySchema, Prefix, Template
from ..node import Delivery, Deployment
from ..overlay import hash_key
from ..pubsub import oracle_map
from ..reply import LinkFilters, contains
from ..simnet import MS, SECOND, Kernel, Network
from ..store import LegacyIndirection, RetentionPolicy, RoutingTableProvider
from ..vocabulary import VocabularyTree
from .agents import Analyzer, HeavyFlowMonitor, PoissonSource, Remediator, random_flow, random_in
from .config import ScenarioConfig, bundled_vocabulary

log = logging.getLogger(__name__)

ROLES = ("R", "T", "V", "U", "S", "A", "M")


def node_id(name: str, salt: str = "disco-node-3") -> int:
    return hash_key(f"{salt}:{name}")


class World:
    TTL_EXCEEDED = "event.network.drops.forwarding.rfc791-ttl-exceeded"
    QUEUE_FULL = "event.network.drops.congestion.queue-full"

    def __init__(self, config: ScenarioConfig, trace: TextIO | None = None):
        self.config = config.validate()
        cfg = self.config
        self.vocab = VocabularyTree.from_lines(bundled_vocabulary())
        self.schema = FlowKeySchema.register(self.vocab)
        v = self.vocab
        self.ids_concept = {name: cid for name, cid in v}
        self.attr = {
            "flow": self.schema.flow_attr,
            "dst": v.id("attribute.flow.rfc791-destination-address"),
            "reporter": v.id("attribute.location.reporter"),
            "time": v.id("attribute.time.occurrence"),
            "prefix": v.id("attribute.prefix.destination"),
            "count": v.id("attribute.metric.count"),
            "cost": v.id("attribute.metric.request-cost"),
            "next_hop": v.id("attribute.routing.next-hop"),
        }
        names = list(ROLES) + [f"n{i:02d}" for i in range(cfg.topology.filler_nodes)]
        self.ids = {n: node_id(n, cfg.topology.id_salt) for n in names}
        self.kernel = Kernel(trace)
        self.network = Network(self.kernel, latency=cfg.hop_latency, jitter=cfg.topology.jitter_us, seed=cfg.traffic.seed)
        o = cfg.disco
        retention = RetentionPolicy(
            base_ttl=round(o.retention_base_s * SECOND),
            tag_bonus={v.id("tag.challenge.ddos"): round(o.tag_bonus_s * SECOND)},
            per_lookup_bonus=round(o.lookup_bonus_s * SECOND),
            per_subscriber_bonus=round(o.subscriber_bonus_s * SECOND),
        )
        self.dep = Deployment(
            self.ids.values(),
            kernel=self.kernel,
            network=self.network,
            vocab=v,
            schema=self.schema,
            links=LinkFilters(o.zfilter_m, o.zfilter_k, o.zfilter_seed),
            leaf_size=cfg.topology.leaf_size,
            edge_latency=cfg.edge_latency,
            ttl_multiple=o.ttl_multiple,
            lts_capacity=o.lts_capacity,
            retention=retention,
            bucket_width=round(o.bucket_ms * MS),
            names={i: n for n, i in self.ids.items()},
        )
        self.victim = Prefix.parse(cfg.traffic.victim_prefix)
        self.dilution = Prefix.parse(cfg.traffic.dilution_prefix)
        self.remediation_active = False
        self.boundaries = sorted({cfg.attack_start, cfg.attack_end, cfg.duration})
        self.drop_topic = oracle_map(v.id(self.TTL_EXCEEDED))
        self._rng_seed = cfg.traffic.seed
        self._build_agents()

    # -- helpers --------------------------------------------------------------------------

    def rng(self, purpose: str) -> random.Random:
        return random.Random(hash_key(f"{self._rng_seed}:{purpose}"))

    def next_boundary(self, now: int) -> int | None:
        i = bisect.bisect_right(self.boundaries, now)
        return self.boundaries[i] if i < len(self.boundaries) else None

    def attacking(self, now: int) -> bool:
        return self.config.attack_start <= now < self.config.attack_end

    def template(self, node: str, event: str, fields: list[tuple[str, AttrType]]) -> Template:
        n = self.ids[node]
        t = Template(
            n,
            self.dep[n].next_template_id(),
            self.vocab.id(event),
            tuple((self.attr[a], ty) for a, ty in fields),
        )
        self.dep.publish_template(n, t)
        return t

    def mixes_sources(self, d: Delivery) -> bool:
        """True when ``d`` aggregates drops published by both U and V.

        Decided from the first-hop links in the z-filter, so a publisher that is
        itself the rendezvous never counts.
        """
        return all(self._first_link_in(name, d.zfilter) for name in ("U", "V"))

    def _first_link_in(self, name: str, z: int) -> bool:
        src = self.ids[name]
        nxt = self.dep.overlay.next_hop(src, self.drop_topic)
        return nxt is not None and contains(z, self.dep.links(src, nxt))

    # -- construction ---------------------------------------------------------------------

    def _build_agents(self) -> None:
        cfg, tr = self.config, self.config.traffic
        self.sources: list[PoissonSource] = []
        drop_fields = [("flow", AttrType.FLOWKEY), ("reporter", AttrType.NODELOC), ("time", AttrType.TIMESTAMP)]
        report_fields = [
            ("prefix", AttrType.IPV4PREFIX),
            ("reporter", AttrType.NODELOC),
            ("count", AttrType.COUNTER64),
            ("time", AttrType.TIMESTAMP),
        ]
        self._start_actions = []

        def factor(now):
            return tr.remediation_factor if self.remediation_active else 1.0

        def drops(node: str, event: str, rate, pick_dst, observe=None):
            t = self.template(node, event, drop_fields)
            nid = self.ids[node]

            def values(rng, now):
                flow = random_flow(rng, pick_dst(rng, now))
                if observe is not None:
                    observe(flow)
                return (flow, nid, now)

            self.sources.append(PoissonSource(self, nid, t, rate, values, self.rng(f"{node}:{event}")))

        victim, dilution, share = self.victim, self.dilution, tr.dilution_share
        ttl_attack = tr.variant == "ttl"

        # R: queue-full drops on the bottleneck link, plus the heavy-flow monitor
        self.monitor = HeavyFlowMonitor(
            self, self.ids["R"], self.template("R", "report.heavy-flow", report_fields),
            round(cfg.detector.heavy_window_ms * MS), cfg.detector.heavy_threshold,
        )

        def r_rate(now):
            r = tr.benign_queue_rate
            if self.attacking(now):
                r += tr.attack_rate * factor(now) if tr.variant in ("ttl", "server") else 0
                r += tr.flash_rate if tr.variant == "flash" else 0
            return r

        def r_dst(rng, now):
            extra = r_rate(now) - tr.benign_queue_rate
            if extra > 0 and rng.random() < extra / r_rate(now):
                if ttl_attack and rng.random() < share:
                    return random_in(rng, dilution)
                return random_in(rng, victim)
            return rng.getrandbits(32)

        drops("R", self.QUEUE_FULL, r_rate, r_dst, self.monitor.observe)

        # V and U: TTL-exceeded drops a few hops past the bottleneck
        for node, pfx, part in (("V", victim, 1 - share), ("U", dilution, share)):
            def rate(now, part=part):
                attack = tr.attack_rate * part * factor(now) if ttl_attack and self.attacking(now) else 0
                return tr.benign_drop_rate + attack

            def dst(rng, now, pfx=pfx, rate=rate):
                r = rate(now)
                if r > tr.benign_drop_rate and rng.random() < (r - tr.benign_drop_rate) / r:
                    return random_in(rng, pfx)
                return rng.getrandbits(32)

            drops(node, self.TTL_EXCEEDED, rate, dst)
        drops("T", self.TTL_EXCEEDED, lambda now: tr.benign_drop_rate, lambda rng, now: rng.getrandbits(32))

        # S: one overload event per expensive request
        s = self.ids["S"]
        st = self.template("S", "event.server.overload.request-cost", [("cost", AttrType.GAUGE64), ("reporter", AttrType.NODELOC), ("time", AttrType.TIMESTAMP)])

        def s_rate(now):
            r = tr.request_rate
            if self.attacking(now):
                r += tr.attack_rate * factor(now) if tr.variant == "server" else 0
                r += tr.flash_rate if tr.variant == "flash" else 0
            return r

        def s_values(rng, now):
            r = s_rate(now)
            malicious = tr.attack_rate * factor(now) if tr.variant == "server" and self.attacking(now) else 0
            base = tr.attack_request_cost if rng.random() < malicious / r else tr.request_cost
            return (max(1, round(rng.gauss(base, base / 10))), s, now)

        self.sources.append(PoissonSource(self, s, st, s_rate, s_values, self.rng("S:requests")))

        challenge_fields = report_fields
        self.analyzer = Analyzer(
            self,
            self.ids["A"],
            {
                "detected": self.template("A", "report.challenge.ddos.detected", challenge_fields),
                "ended": self.template("A", "report.challenge.ddos.ended", challenge_fields),
            },
        )
        self.remediator = Remediator(self, self.ids["M"])

        # legacy store: a static routing table reachable through the lookup proxy
        rt = Template(self.ids["T"], self.dep[self.ids["T"]].next_template_id(), self.vocab.id("event.routing.table-entry"),
                      ((self.attr["prefix"], AttrType.IPV4PREFIX), (self.attr["next_hop"], AttrType.NODELOC)))
        provider = RoutingTableProvider([(victim, self.ids["V"]), (dilution, self.ids["U"])], rt, self.attr["prefix"], self.schema)
        self.dep.proxy.add_indirection(LegacyIndirection(self.vocab.pattern("event.routing.*"), provider, name="routing-table"))

    # -- running --------------------------------------------------------------------------

    def run(self, until: int | None = None) -> dict:
        cfg = self.config
        end = cfg.duration if until is None else min(until, cfg.duration)
        self.analyzer.start()
        self.remediator.start()
        self.monitor.start()
        for src in self.sources:
            src.start()
        self.dep.schedule_sweeps(round(cfg.disco.sweep_interval_s * SECOND), end)
        self.kernel.run(end)
        self.finished_at = self.kernel.now
        return self.metrics()

    def metrics(self) -> dict:
        cfg, dep, a, m = self.config, self.dep, self.analyzer, self.remediator
        name = dep.name
        out: dict = {}
        for (src, dst), n in sorted(self.network.bytes.items(), key=lambda kv: (name(kv[0][0]), name(kv[0][1]))):
            out[f"bytes.link.{name(src)}-{name(dst)}"] = n
        per_topic: dict = {}
        for (topic, _kind), n in dep.msgs.items():
            per_topic[topic] = per_topic.get(topic, 0) + n
        for topic, n in per_topic.items():
            key = "msgs.routed" if topic == 0 else f"msgs.topic.{topic:016x}"
            out[key] = n

        subs = [s for node in dep.nodes.values() for s in node.local.values()]
        deliveries = sum(s.deliveries for s in subs)
        base = sum(s.base_events for s in subs)
        out["agg.ratio"] = round(base / deliveries, 6) if deliveries else 0.0
        out["agg.drop_deliveries"] = a.drop_deliveries
        out["agg.drop_base_events"] = a.drop_base
        out["agg.mixed_sources"] = a.mixed
        out["flex.queue_full_events"] = a.queue_base
        out["flex.ttl_events"] = a.drop_base

        out["detect.count"] = len(a.detected)
        out["detect.end_count"] = len(a.ended)
        out["detect.latency_us"] = a.detected[0] - cfg.attack_start if a.detected and self._attack_configured() else -1
        out["detect.times_us"] = list(a.detected)
        out["detect.end_times_us"] = list(a.ended)
        out["false_alarms"] = sum(1 for t in a.detected if not self._plausible(t))

        out["bytes.a_path"] = dep.path_bytes(self.drop_topic, self.ids["A"]) if self._in_tree("A") else 0
        for topic in sorted(per_topic):
            if topic == 0:
                continue
            s = self._stretch(topic)
            if s is not None:
                out[f"stretch.topic.{topic:016x}"] = round(s, 6)

        out["notices.no_subscriber"] = sum(1 for n in dep.nodes.values() for _, k, _ in n.notices if k.name == "NO_SUBSCRIBER")
        out["notices.subscribers_ready"] = sum(1 for n in dep.nodes.values() for _, k, _ in n.notices if k.name == "SUBSCRIBERS_READY")
        out["events.published"] = sum(dep.published.values())
        out["events.held_back"] = dep.held_back
        out["reply.sent"] = m.replies
        out["reply.node_visits"] = sum(dep.reply_visits.values())
        out["dws.elections"] = dep.elections
        out["dws.entries"] = len(dep.dws)
        out["dws.lookup.drops"] = m.lookups.get("drops", -1)
        out["dws.lookup.overload"] = m.lookups.get("overload", -1)
        out["remediation.actions"] = [f"{t}:{what}" for t, what in m.actions]
        out["heavy_flow.reports"] = self.monitor.reports
        out["sim.end_us"] = self.finished_at
        out["sim.actions"] = self.kernel.executed
        return out

    def _attack_configured(self) -> bool:
        tr = self.config.traffic
        return tr.attack_rate > 0 and tr.variant in ("ttl", "server") and tr.attack_s > 0

    def _plausible(self, t: int) -> bool:
        """A detection is justified if an attack ran within one rate window before it."""
        if not self._attack_configured():
            return False
        slack = round(self.config.detector.rate_window_ms * MS) + round(self.config.detector.check_interval_ms * MS)
        return self.config.attack_start <= t <= self.config.attack_end + slack

    def _in_tree(self, name: str) -> bool:
        return self.drop_topic in self.dep[self.ids[name]].forwarders

    def _stretch(self, topic: int) -> float | None:
        dep = self.dep
        subscribers = [n.id for n in dep.nodes.values() if any(topic in s.topics for s in n.local.values())]
        publishers = sorted({t.issuer for n in dep.nodes.values() for t in n.own_templates.values() if oracle_map(t.event_id) == topic})
        pairs = [(p, s) for p in publishers for s in subscribers if p != s]
        if not pairs:
            return None
        return sum(dep.stretch(topic, p, s) for p, s in pairs) / len(pairs)


def run_scenario(config: ScenarioConfig, seed: int | None = None, trace: TextIO | None = None, until: int | None = None) -> dict:
    if seed is not None:
        config = config.with_seed(seed)
    return World(config, trace).run(until)


def dump_metrics(metrics: dict) -> str:
    return json.dumps(metrics, sort_keys=True, indent=2) + "\n"
