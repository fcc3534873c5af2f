"""Deterministic discrete-event kernel and link model.

Time is an integer number of microseconds. Actions run in ``(time, lane,
seq)`` order: ``seq`` grows with every ``schedule`` call, so actions at
equal times fire in scheduling order. Timers may ask for the *late* lane,
which runs after every ordinary action due at the same instant.
"""
from __future__ import annotations

import heapq
import random
from collections import Counter
from typing import Any, Callable, Hashable, TextIO

US = 1
MS = 1_000
SECOND = 1_000_000


class SimError(Exception):
    pass


class SchedulePast(SimError):
    pass


class UnknownNode(SimError, KeyError):
    pass


class Handle:
    __slots__ = ("at", "seq", "cancelled", "fired")

    def __init__(self, at: int, seq: int):
        self.at = at
        self.seq = seq
        self.cancelled = False
        self.fired = False

    @property
    def pending(self) -> bool:
        return not (self.cancelled or self.fired)

    def __repr__(self):
        state = "cancelled" if self.cancelled else "fired" if self.fired else "pending"
        return f"<Handle t={self.at} seq={self.seq} {state}>"


class Kernel:
    def __init__(self, trace: TextIO | None = None):
        self.now = 0
        self._queue: list = []
        self._seq = 0
        self.trace_out = trace
        self.executed = 0

    def schedule(self, at: int, action: Callable, *args, late: bool = False) -> Handle:
        if at < self.now:
            raise SchedulePast(f"cannot schedule at {at}, clock is at {self.now}")
        h = Handle(at, self._seq)
        heapq.heappush(self._queue, (at, 1 if late else 0, self._seq, h, action, args))
        self._seq += 1
        return h

    def after(self, delay: int, action: Callable, *args, late: bool = False) -> Handle:
        return self.schedule(self.now + delay, action, *args, late=late)

    def cancel(self, handle: Handle | None) -> None:
        if handle is not None and not handle.fired:
            handle.cancelled = True

    def step(self) -> bool:
        """Run the next live action; False when the queue is empty."""
        while self._queue:
            at, _, _, h, action, args = heapq.heappop(self._queue)
            if h.cancelled:
                continue
            self.now = at
            h.fired = True
            self.executed += 1
            action(*args)
            return True
        return False

    def run(self, until: int | None = None) -> int:
        """Fire actions due at or before ``until`` (all, when None); return the clock."""
        q = self._queue
        while q:
            if q[0][3].cancelled:
                heapq.heappop(q)
                continue
            at = q[0][0]
            if until is not None and at > until:
                break
            self.step()
        if until is not None and until > self.now:
            self.now = until
        return self.now

    def idle(self) -> bool:
        return not any(not entry[3].cancelled for entry in self._queue)

    def trace(self, node: Any, kind: str, detail: str = "") -> None:
        if self.trace_out is not None:
            self.trace_out.write(f"{self.now}\t{node}\t{kind}\t{detail}\n")


class Network:
    """Point-to-point links between named nodes with latency and byte counters."""

    def __init__(
        self,
        kernel: Kernel,
        latency: int = 1 * MS,
        jitter: int = 0,
        seed: int = 0,
    ):
        if latency <= 0:
            raise ValueError("latency must be positive")
        self.kernel = kernel
        self.latency = latency
        self.jitter = jitter
        self.rng = random.Random(seed)
        self.nodes: set[Hashable] = set()
        self.link_latency: dict[tuple[Hashable, Hashable], int] = {}
        self.bytes: Counter = Counter()
        self.messages: Counter = Counter()

    def add_node(self, node: Hashable) -> None:
        self.nodes.add(node)

    def set_latency(self, src: Hashable, dst: Hashable, latency: int) -> None:
        if latency <= 0:
            raise ValueError("latency must be positive")
        self.link_latency[src, dst] = latency

    def delay(self, src: Hashable, dst: Hashable) -> int:
        d = self.link_latency.get((src, dst), self.latency)
        if self.jitter:
            d += self.rng.randint(0, self.jitter)
        return d

    def send(self, src: Hashable, dst: Hashable, nbytes: int, on_deliver: Callable, *args) -> Handle:
        if src not in self.nodes:
            raise UnknownNode(src)
        if dst not in self.nodes:
            raise UnknownNode(dst)
        self.bytes[src, dst] += nbytes
        self.messages[src, dst] += 1
        return self.kernel.after(self.delay(src, dst), on_deliver, *args)
