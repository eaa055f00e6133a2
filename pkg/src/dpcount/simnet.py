"""Discrete-event simulation of the distributed verifiers.

Events are kept in a heap ordered by ``(time, seq)``.  Every device has an
input queue and processes one item at a time (or, with dampening, drains
the whole queue before announcing anything).  UPDATE messages travel over
a control channel with a fixed latency per device pair and are delivered in
FIFO order per directed pair.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field

from .countalg import evaluate, equal_region
from .countsets import zero
from .dataplane import DataPlane, FibUpdate
from .dvproto import DeviceVerifier, UpdateMessage
from .planner import Plan
from .predicate import Predicate

DEFAULT_LATENCY_US = 10.0


class EventBudgetExceeded(RuntimeError):
    pass


@dataclass
class RunStats:
    event_id: int
    convergence_us: float
    messages: int
    bytes_proxy: int
    devices_changed: int

    def row(self) -> str:
        return f"{self.event_id},{self.convergence_us:g},{self.messages},{self.bytes_proxy},{self.devices_changed}"


CSV_HEADER = "event_id,convergence_us,messages,bytes_proxy,devices_changed"


@dataclass
class ScriptedEvent:
    time: float
    kind: str  # update | link
    update: FibUpdate | None = None
    link: tuple[str, str] | None = None
    up: bool = True


@dataclass
class _Queue:
    items: list = field(default_factory=list)
    busy_until: float = 0.0
    scheduled: bool = False


class Simulator:
    def __init__(self, dp: DataPlane, plans: list[Plan], latency: dict[frozenset, float] | None = None,
                 default_latency: float = DEFAULT_LATENCY_US, processing_us: float = 0.0,
                 dampening: bool = False, seed: int | None = None, event_budget: int = 1_000_000,
                 log=None):
        ids = [p.plan_id for p in plans]
        if len(set(ids)) != len(ids):
            raise ValueError("plan ids must be unique")
        self.dp = dp
        self.plans = plans
        self.latency = dict(latency or {})
        self.default_latency = default_latency
        self.processing_us = processing_us
        self.dampening = dampening
        self.rng = random.Random(seed) if seed is not None else None
        self.event_budget = event_budget
        self.log = log
        self.devices = sorted(dp.topology.devices)
        self.verifiers = {d: DeviceVerifier(d, dp, plans) for d in self.devices}
        self.now = 0.0
        self._heap: list = []
        self._seq = 0
        self._queues = {d: _Queue() for d in self.devices}
        self._last_arrival: dict[tuple[str, str], float] = {}
        self._events = 0
        self._messages = 0
        self._bytes = 0
        self._last_activity = 0.0
        self.last_changed: set[str] = set()
        self._host = {}
        for plan in plans:
            for nid, node in plan.dvnet.nodes.items():
                self._host[(plan.plan_id, nid)] = node.phys

    # ------------------------------------------------------------ plumbing

    def _push(self, t: float, kind: str, payload) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, kind, payload))

    def _enqueue(self, dev: str, t: float, item) -> None:
        q = self._queues[dev]
        q.items.append(item)
        if not q.scheduled:
            q.scheduled = True
            self._push(max(t, q.busy_until), "process", dev)

    def _link_latency(self, a: str, b: str) -> float:
        base = self.latency.get(frozenset((a, b)), self.default_latency)
        if self.rng is not None:
            base *= self.rng.uniform(0.5, 1.5)
        return base

    def _send(self, src: str, msgs: list[UpdateMessage], t: float) -> None:
        for msg in msgs:
            dst = self._host[(msg.plan_id, msg.up)]
            arrive = t + self._link_latency(src, dst)
            pair = (src, dst)
            arrive = max(arrive, self._last_arrival.get(pair, arrive))
            self._last_arrival[pair] = arrive
            self._messages += 1
            self._bytes += msg.size_proxy()
            if self.log is not None:
                self.log(f"{t:g} {src}->{dst} {msg.text()}")
            self._push(arrive, "deliver", (dst, msg))

    def _process(self, dev: str, t: float) -> None:
        q = self._queues[dev]
        v = self.verifiers[dev]
        take = q.items if self.dampening else q.items[:1]
        q.items = [] if self.dampening else q.items[1:]
        done = t
        for item in take:
            kind, payload = item
            if kind == "msg":
                v.handle_update(payload)
            elif kind == "fib":
                v.handle_internal(self.dp.apply_update(payload))
            elif kind == "delta":
                v.handle_internal(payload)
            elif kind == "start":
                v.start()
            done += self.processing_us
            if not self.dampening:
                break
        q.busy_until = done
        self._send(dev, v.flush(), done)
        self._last_activity = max(self._last_activity, done)
        q.scheduled = False
        if q.items:
            q.scheduled = True
            self._push(done, "process", dev)

    def _run(self) -> None:
        while self._heap:
            t, _, kind, payload = heapq.heappop(self._heap)
            self._events += 1
            if self._events > self.event_budget:
                raise EventBudgetExceeded(f"more than {self.event_budget} events; the run does not converge")
            self.now = t
            if kind == "process":
                self._process(payload, t)
            elif kind == "deliver":
                dst, msg = payload
                self._last_activity = max(self._last_activity, t)
                self._enqueue(dst, t, ("msg", msg))
            elif kind == "fib":
                self._enqueue(payload.device, t, ("fib", payload))
            elif kind == "link":
                (a, b), up = payload
                for d, delta in self.dp.link_event(a, b, up).items():
                    self._enqueue(d, t, ("delta", delta))

    def _measure(self, event_id: int, start: float, fn) -> RunStats:
        before = self.results_snapshot()
        m0, b0 = self._messages, self._bytes
        self._last_activity = start
        fn()
        self._run()
        after = self.results_snapshot()
        changed = {d for d in self.devices if before.get(d) != after.get(d)}
        self.last_changed = changed
        return RunStats(event_id, self._last_activity - start, self._messages - m0,
                        self._bytes - b0, len(changed))

    # ---------------------------------------------------------------- runs

    def burst(self) -> RunStats:
        """Every verifier initialises at time zero; run until quiet."""

        def kick():
            for d in self.devices:
                self._enqueue(d, self.now, ("start", None))

        return self._measure(0, self.now, kick)

    def apply(self, event: ScriptedEvent, event_id: int) -> RunStats:
        """Inject one scripted event once the network is quiet and run until quiet again."""
        t = max(self.now, event.time)

        def kick():
            if event.kind == "update":
                self._push(t, "fib", event.update)
            else:
                self._push(t, "link", (event.link, event.up))

        return self._measure(event_id, t, kick)

    def incremental(self, events: list[ScriptedEvent]) -> list[RunStats]:
        return [self.apply(ev, i + 1) for i, ev in enumerate(sorted(events, key=lambda e: e.time))]

    def run_concurrent(self, events: list[ScriptedEvent]) -> RunStats:
        """Inject all events at their times and run once (events may overlap)."""

        def kick():
            for ev in events:
                if ev.kind == "update":
                    self._push(ev.time, "fib", ev.update)
                else:
                    self._push(ev.time, "link", (ev.link, ev.up))

        return self._measure(1, self.now, kick)

    # ----------------------------------------------------------- inspection

    def results_snapshot(self) -> dict[str, tuple]:
        """Per device, the counting results of its hosted nodes."""
        out = {}
        for d, v in self.verifiers.items():
            items = []
            for (pid, nid), st in sorted(v.nodes.items()):
                if st.plan.kind == "equal":
                    items.append((pid, nid, st.violations.node if st.violations is not None else None))
                else:
                    items.append((pid, nid, tuple((p.node, tuple(sorted(c))) for p, c in st.result())))
            out[d] = tuple(items)
        return out

    def state_snapshot(self) -> dict:
        out = {}
        for d, v in self.verifiers.items():
            out.update({(d,) + k: s for k, s in v.snapshot().items()})
        return out

    def node_results(self, plan: Plan) -> dict[str, list]:
        return {nid: self.verifiers[node.phys].result(plan.plan_id, nid)
                for nid, node in plan.dvnet.nodes.items()}

    def violated_regions(self) -> dict[str, Predicate]:
        """Violated packets per ingress, as reported by the source devices."""
        space = self.dp.space
        out: dict[str, Predicate] = {}
        for plan in self.plans:
            if plan.kind == "equal":
                viol = {}
                for d, v in self.verifiers.items():
                    for pid, nid, p in v.equal_local_check():
                        if pid == plan.plan_id:
                            viol[nid] = p
                regions = equal_region(plan, viol, space)
            else:
                regions = {}
                for ing in plan.requirement.ingress:
                    if ing in plan.dvnet.sources:
                        nid = plan.dvnet.sources[ing]
                        part = self.verifiers[plan.dvnet.nodes[nid].phys].result(plan.plan_id, nid)
                    elif not plan.packet_space.is_empty():
                        part = [(plan.packet_space, zero(plan.m))]
                    else:
                        part = []
                    bad = space.FALSE
                    for c in evaluate(plan, part):
                        if not c.ok:
                            bad = bad | c.pred
                    regions[ing] = bad
            for ing, bad in regions.items():
                out[ing] = out.get(ing, space.FALSE) | bad
        return out

    def check_invariants(self) -> None:
        for v in self.verifiers.values():
            v.check_invariants()


def shortest_latency(dp: DataPlane, src: str, latency: dict[frozenset, float],
                     default: float = DEFAULT_LATENCY_US) -> dict[str, float]:
    """Dijkstra over the topology with per-link latency."""
    dist = {src: 0.0}
    heap = [(0.0, src)]
    adj = dp.topology.adjacency()
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for w in adj[u]:
            nd = d + latency.get(frozenset((u, w)), default)
            if nd < dist.get(w, float("inf")):
                dist[w] = nd
                heapq.heappush(heap, (nd, w))
    return dist


def centralized_baseline(dp: DataPlane, collector: str | None = None,
                         latency: dict[frozenset, float] | None = None,
                         default: float = DEFAULT_LATENCY_US) -> RunStats:
    """Time for every device to ship its FIB to one collector.

    Verification time at the collector is not modelled; the figure is a
    lower bound on the time-to-verdict of a centralized design.
    """
    collector = collector or sorted(dp.topology.devices)[0]
    dist = shortest_latency(dp, collector, latency or {}, default)
    reach = [d for d in dp.topology.devices if d in dist and d != collector]
    size = sum(sum(r.match.size_nodes() * 16 + 8 for r in dp.fibs[d]) for d in reach)
    return RunStats(0, max((dist[d] for d in reach), default=0.0), len(reach), size, 0)
