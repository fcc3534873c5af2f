"""Sensors, detectors and the remediation stub of the DDoS scenario.

Sensors synthesize Poisson event streams from the traffic model instead of
simulating packets. The monitor at R turns its own queue-full reports into
heavy-flow reports; the analyzer A wakes up on those, zooms in on drops
towards the reported prefixes and declares the challenge; the remediator M
tags the drop events behind each alarm so they get elected to the DWS.
"""
from __future__ import annotations

import logging
import random
from collections import Counter, deque
from typing import TYPE_CHECKING, Callable

from ..aggregation import AnyOf, FilterConstraint, GranularitySpec
from ..events import AttrType, EventRecord, FlowKey, Prefix, Template
from ..node import Delivery
from ..pubsub import SubscriptionSpec
from ..simnet import MS, SECOND
from ..store import LookupQuery

if TYPE_CHECKING:
    from .harness import World

log = logging.getLogger(__name__)


def random_in(rng: random.Random, prefix: Prefix) -> int:
    span = 1 << (32 - prefix.length)
    return prefix.addr + rng.randrange(span)


def random_flow(rng: random.Random, dst: int) -> FlowKey:
    return FlowKey(rng.getrandbits(32), dst, rng.randrange(1024, 65536), 80, 6)


class PoissonSource:
    """Publishes events at a piecewise-constant rate.

    ``rate(now)`` may change only at the world's phase boundaries (or when
    remediation kicks in); arrivals are re-drawn at each boundary, which is
    exact for a Poisson process.
    """

    def __init__(self, world: "World", node: int, template: Template, rate: Callable[[int], float], values, rng):
        self.world = world
        self.node = node
        self.template = template
        self.rate = rate
        self.values = values
        self.rng = rng
        self.published = 0

    def start(self) -> None:
        self._plan()

    def _plan(self) -> None:
        w = self.world
        now = w.kernel.now
        nxt = w.next_boundary(now)
        r = self.rate(now)
        if r > 0:
            at = now + max(1, round(self.rng.expovariate(r) * SECOND))
            if (nxt is None or at < nxt) and at < w.config.duration:
                w.kernel.schedule(at, self._fire)
                return
        if nxt is not None:
            w.kernel.schedule(nxt, self._plan)

    def _fire(self) -> None:
        t = self.template
        now = self.world.kernel.now
        self.world.dep.publish(self.node, EventRecord(t.event_id, t.template_id, t.issuer, self.values(self.rng, now)))
        self.published += 1
        self._plan()


class HeavyFlowMonitor:
    """Counts R's queue-full drops per destination /16 over tumbling windows."""

    def __init__(self, world: "World", node: int, template: Template, window: int, threshold: int):
        self.world = world
        self.node = node
        self.template = template
        self.window = window
        self.threshold = threshold
        self.counts: Counter = Counter()
        self.reports = 0

    def start(self) -> None:
        self.world.kernel.after(self.window, self._close)

    def observe(self, flow: FlowKey) -> None:
        self.counts[Prefix(flow.dst & 0xFFFF0000, 16)] += 1

    def _close(self) -> None:
        w = self.world
        now = w.kernel.now
        t = self.template
        for pfx in sorted(p for p, n in self.counts.items() if n >= self.threshold):
            w.dep.publish(self.node, EventRecord(t.event_id, t.template_id, t.issuer, (pfx, self.node, self.counts[pfx], now)))
            self.reports += 1
        self.counts.clear()
        if now + self.window < w.config.duration:
            w.kernel.after(self.window, self._close)


def prefix_filter(attr: int, prefixes: list[Prefix]):
    if len(prefixes) == 1:
        return FilterConstraint.prefix(attr, prefixes[0])
    return AnyOf(attr, tuple((FilterConstraint.prefix(attr, p),) for p in prefixes))


class DropWatcher:
    """Shared subscription logic of A and M, so both ask for the same spec.

    Identical specs let every shared forwarder aggregate once for both.
    """

    def __init__(self, world: "World", node: int):
        self.world = world
        self.node = node
        self.prefixes: list[Prefix] = []
        self.max_events = world.config.detector.steady_max_events
        self.watching = False

    def watch_reports(self, on_report: Callable[[Delivery], None] | None = None) -> None:
        w = self.world
        spec = SubscriptionSpec(
            w.vocab.pattern("report.heavy-flow"),
            (FilterConstraint.equals(w.attr["reporter"], AttrType.NODELOC, w.ids["R"]),),
        )

        def handle(d: Delivery):
            pfx = d.event.values[0]
            if pfx not in self.prefixes:
                self.prefixes = sorted(self.prefixes + [pfx])
                if self.watching:
                    self.subscribe_drops()
            if on_report is not None:
                on_report(d)

        w.dep.subscribe(self.node, spec, handle)

    def drop_spec(self) -> SubscriptionSpec:
        w = self.world
        det = w.config.detector
        pattern = w.vocab.pattern("event.network.drops.*" if det.flexible else w.TTL_EXCEEDED)
        return SubscriptionSpec(
            pattern,
            (prefix_filter(w.attr["dst"], self.prefixes),),
            granularity=GranularitySpec(self.max_events, w.config.max_period),
        )

    def server_spec(self) -> SubscriptionSpec:
        w = self.world
        return SubscriptionSpec(
            w.vocab.pattern("event.server.overload.*"),
            granularity=GranularitySpec(w.config.detector.steady_max_events, w.config.max_period),
        )

    def subscribe_drops(self) -> None:
        self.watching = True
        if self.prefixes:
            self.world.dep.subscribe(self.node, self.drop_spec(), self.on_drops)

    def on_drops(self, d: Delivery) -> None:
        pass


class Analyzer(DropWatcher):
    """Agent A: dormant until R reports a heavy flow."""

    def __init__(self, world: "World", node: int, templates: dict[str, Template]):
        super().__init__(world, node)
        self.templates = templates
        self.drop_log: deque = deque()
        self.server_log: deque = deque()
        self.in_challenge = False
        self.quiet = 0
        self.detected: list[int] = []
        self.ended: list[int] = []
        self.drop_deliveries = 0
        self.drop_base = 0
        self.queue_base = 0
        self.mixed = 0
        self.challenge_prefix: Prefix | None = None

    def start(self) -> None:
        w = self.world
        self.watch_reports(self._on_report)
        w.dep.subscribe(self.node, self.server_spec(), self._on_server)
        w.kernel.after(round(w.config.detector.check_interval_ms * MS), self._check)

    def _on_report(self, d: Delivery) -> None:
        if not self.watching:
            self.subscribe_drops()

    def on_drops(self, d: Delivery) -> None:
        w = self.world
        self.drop_deliveries += 1
        n = d.meta.base_count
        if d.event.event_id == w.ids_concept[w.TTL_EXCEEDED]:
            self.drop_base += n
            self.drop_log.append((w.kernel.now, n))
        else:
            self.queue_base += n
        if w.mixes_sources(d):
            self.mixed += 1

    def _on_server(self, d: Delivery) -> None:
        cost = d.event.values[d.template.index(self.world.attr["cost"])]
        self.server_log.append((self.world.kernel.now, d.meta.base_count, cost * d.meta.base_count))

    def _window(self) -> tuple[int, int, float]:
        w = self.world
        horizon = w.kernel.now - round(w.config.detector.rate_window_ms * MS)
        for q in (self.drop_log, self.server_log):
            while q and q[0][0] <= horizon:
                q.popleft()
        drops = sum(n for _, n in self.drop_log)
        reqs = sum(n for _, n, _ in self.server_log)
        mean_cost = sum(c for _, _, c in self.server_log) / reqs if reqs else 0.0
        return drops, reqs, mean_cost

    def _check(self) -> None:
        w = self.world
        det = w.config.detector
        drops, reqs, mean_cost = self._window()
        window_s = det.rate_window_ms / 1000
        server_alarm = reqs >= det.server_rate_threshold * window_s and mean_cost >= det.server_cost_threshold
        if not self.in_challenge:
            if drops >= det.drop_threshold or server_alarm:
                self._declare("detected", self.prefixes[0] if drops >= det.drop_threshold else w.victim)
        else:
            if drops >= det.end_threshold or server_alarm:
                self.quiet = 0
            else:
                self.quiet += 1
                if self.quiet >= det.end_checks:
                    self._declare("ended", self.challenge_prefix)
        interval = round(det.check_interval_ms * MS)
        if w.kernel.now + interval < w.config.duration:
            w.kernel.after(interval, self._check)

    def _declare(self, what: str, prefix: Prefix) -> None:
        w = self.world
        now = w.kernel.now
        t = self.templates[what]
        drops, _, _ = self._window()
        w.dep.publish(self.node, EventRecord(t.event_id, t.template_id, t.issuer, (prefix, self.node, drops, now)))
        if what == "detected":
            self.in_challenge = True
            self.quiet = 0
            self.challenge_prefix = prefix
            self.detected.append(now)
            finer = w.config.detector.challenge_max_events
            if finer and finer != self.max_events:
                self.max_events = finer
                self.subscribe_drops()
        else:
            self.in_challenge = False
            self.ended.append(now)
            if self.max_events != w.config.detector.steady_max_events:
                self.max_events = w.config.detector.steady_max_events
                self.subscribe_drops()
        log.info("A: challenge %s at %d us (%s)", what, now, prefix)


class Remediator(DropWatcher):
    """Agent M: tags the events behind an alarm and runs the post-mortem lookup."""

    def __init__(self, world: "World", node: int):
        super().__init__(world, node)
        self.active = False
        self.replies = 0
        self.detected_at: int | None = None
        self.lookups: dict[str, int] = {}
        self.actions: list[tuple[int, str]] = []

    def start(self) -> None:
        w = self.world
        self.watch_reports()
        w.dep.subscribe(self.node, SubscriptionSpec(w.vocab.pattern("report.challenge.ddos.*")), self._on_challenge)

    def _on_challenge(self, d: Delivery) -> None:
        w = self.world
        now = w.kernel.now
        if d.event.event_id == w.ids_concept["report.challenge.ddos.detected"]:
            if self.active:
                return
            self.active = True
            self.detected_at = d.event.values[3]
            finer = w.config.detector.challenge_max_events
            self.max_events = finer or w.config.detector.steady_max_events
            self.subscribe_drops()
            w.dep.subscribe(self.node, self.server_spec(), self.on_drops)
            self.actions.append((now, f"rate-limit {d.event.values[0]}"))
            if w.config.traffic.remediate:
                w.remediation_active = True
        else:
            if not self.active:
                return
            self.active = False
            self.actions.append((now, f"lift {d.event.values[0]}"))
            w.remediation_active = False
            steady = w.config.detector.steady_max_events
            if self.max_events != steady:
                self.max_events = steady
                self.subscribe_drops()
            self._diagnose(self.detected_at, d.event.values[3])

    def on_drops(self, d: Delivery) -> None:
        if not self.active:
            return
        w = self.world
        w.dep.reply(self.node, d, [w.ids_concept["tag.challenge.ddos"]])
        self.replies += 1

    def _diagnose(self, start: int, end: int) -> None:
        w = self.world
        back = round(w.config.detector.diagnostic_lookback_s * SECOND)
        drops = LookupQuery(
            w.vocab.pattern("event.network.drops.*"),
            (prefix_filter(w.attr["dst"], self.prefixes),) if self.prefixes else (),
            max(0, start - back),
            end,
        )
        overload = LookupQuery(w.vocab.pattern("event.server.overload.*"), (), start, end)

        def done(name):
            def cb(results):
                self.lookups[name] = len(results)

            return cb

        w.dep.lookup(self.node, drops, done("drops"))
        w.dep.lookup(self.node, overload, done("overload"))
