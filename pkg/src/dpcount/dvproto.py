"""On-device verifier: counting state, UPDATE handling and local events.

Each device runs one ``DeviceVerifier`` for every plan node it hosts.  Per
node it keeps

* ``cib_in``: the latest partition received from each child;
* ``loc_cib``: entries ``(pred, count, action, causality)`` where
  causality lists, per child consulted, the received cell the count was
  derived from;
* ``announced``: what parents currently believe this node's result is.

Parents initially assume every child counts zero everywhere, so a node only
sends what differs from that.  Counts are recomputed from causality rather
than by inverting the set operators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import countsets as cs
from .countalg import contributions, equal_node_violations, hop_groups, node_count, plan_truncation
from .countsets import CountSet
from .dataplane import ActionGroup, DataPlane, Delta
from .planner import DvNode, Plan
from .predicate import Predicate


class ProtocolError(RuntimeError):
    pass


@dataclass
class UpdateMessage:
    plan_id: str
    version: int
    up: str  # receiving (upstream) node
    down: str  # sending (downstream) node
    withdrawn: list[Predicate]
    incoming: list[tuple[Predicate, CountSet]]

    def check(self) -> None:
        if not self.withdrawn:
            raise ProtocolError("UPDATE with nothing withdrawn")
        space = self.withdrawn[0].space
        w = space.FALSE
        for p in self.withdrawn:
            w = w | p
        seen = space.FALSE
        for p, _ in self.incoming:
            if p.overlaps(seen):
                raise ProtocolError(f"UPDATE {self.down}->{self.up}: incoming predicates overlap")
            seen = seen | p
        if seen != w:
            raise ProtocolError(f"UPDATE {self.down}->{self.up}: withdrawn and incoming cover different packets")

    def size_proxy(self) -> int:
        preds = sum(p.size_nodes() for p in self.withdrawn) + sum(p.size_nodes() for p, _ in self.incoming)
        m = len(next(iter(self.incoming[0][1]))) if self.incoming else 1
        return preds * 16 + 8 * sum(len(c) for _, c in self.incoming) * m

    def text(self) -> str:
        w = ",".join(str(p.node) for p in self.withdrawn)
        i = ",".join(f"({p.node},{cs.show(c)})" for p, c in self.incoming)
        return f"UPD {self.up} {self.down} W:[{w}] I:[{i}]"


@dataclass
class Entry:
    pred: Predicate
    count: CountSet
    action: ActionGroup | None  # None: delivered here
    causality: tuple[tuple[str, Predicate, CountSet], ...] = ()

    def key(self):
        return (self.action, self.count, tuple((c, k) for c, _, k in self.causality))


@dataclass
class NodeState:
    node: DvNode
    plan: Plan
    cib_in: dict[str, list[tuple[Predicate, CountSet]]]
    loc_cib: list[Entry] = field(default_factory=list)
    announced: list[tuple[Predicate, CountSet]] = field(default_factory=list)
    violations: Predicate | None = None  # equal plans only

    def result(self) -> list[tuple[Predicate, CountSet]]:
        return _merge_counts(((e.pred, e.count) for e in self.loc_cib), self.plan.packet_space.space)


def _merge_counts(cells, space) -> list[tuple[Predicate, CountSet]]:
    by: dict[CountSet, Predicate] = {}
    for p, c in cells:
        if not p.is_empty():
            by[c] = by.get(c, space.FALSE) | p
    return sorted(((p, c) for c, p in by.items()), key=lambda pc: (sorted(pc[1]), pc[0].node))


def _merge_entries(entries: list[Entry], space) -> list[Entry]:
    groups: dict[tuple, Entry] = {}
    for e in entries:
        if e.pred.is_empty():
            continue
        k = e.key()
        g = groups.get(k)
        if g is None:
            groups[k] = Entry(e.pred, e.count, e.action, e.causality)
        else:
            caus = tuple((c, p | q, k2) for (c, p, k2), (_, q, _) in zip(g.causality, e.causality))
            groups[k] = Entry(g.pred | e.pred, g.count, g.action, caus)
    return sorted(groups.values(), key=lambda e: (sorted(e.count), str(e.action), e.pred.node))


class DeviceVerifier:
    def __init__(self, device: str, dp: DataPlane, plans: list[Plan]):
        self.device = device
        self.dp = dp
        self.space = dp.space
        self.plans = {p.plan_id: p for p in plans}
        self.nodes: dict[tuple[str, str], NodeState] = {}
        for plan in plans:
            for nid in plan.dvnet.order:
                node = plan.dvnet.nodes[nid]
                if node.phys != device:
                    continue
                zero = [(plan.packet_space, cs.zero(plan.m))] if not plan.packet_space.is_empty() else []
                cib = {} if plan.kind == "equal" else {c: list(zero) for c in node.children}
                self.nodes[(plan.plan_id, nid)] = NodeState(node, plan, cib, announced=list(zero))
        self.dirty: set[tuple[str, str]] = set()
        self.received = 0

    # ---------------------------------------------------------- computing

    def _trunc(self, plan: Plan):
        return plan_truncation(plan)

    def _compute(self, st: NodeState, region: Predicate) -> list[Entry]:
        plan, node = st.plan, st.node
        m = plan.m
        out = []
        delivered = region & self.dp.delivery[node.phys]
        if not delivered.is_empty():
            out.append(Entry(delivered, cs.unit(m, node.owners), None, ()))
        rest = region - delivered
        groups = hop_groups(node, plan)
        trunc = self._trunc(plan)
        for p, action in self.dp.actions_over(node.phys, rest):
            kids = [c for h in action.hops for c in groups.get(h, ())]
            cells = [(p, ())]
            for c in kids:
                nxt = []
                for x, caus in cells:
                    for q, k in st.cib_in[c]:
                        y = x & q
                        if not y.is_empty():
                            nxt.append((y, caus + ((c, q, k),)))
                cells = nxt
            for x, caus in cells:
                out.append(Entry(x, self._count(st, action, caus, trunc), action, caus))
        return out

    def _count(self, st: NodeState, action: ActionGroup, caus, trunc) -> CountSet:
        plan = st.plan
        groups = hop_groups(st.node, plan)
        got = {c: k for c, _, k in caus}
        contrib = contributions({h: groups[h] for h in action.hops if h in groups}, got, plan.m)
        c = node_count(action, contrib, plan.m)
        return trunc(c) if trunc is not None else c

    def _recompute(self, key, region: Predicate) -> None:
        st = self.nodes[key]
        if st.plan.kind == "equal":
            st.violations = equal_node_violations(st.node, st.plan, self.dp)
            return
        region = region & st.plan.packet_space
        if region.is_empty():
            return
        kept = []
        for e in st.loc_cib:
            rest = e.pred - region
            if not rest.is_empty():
                kept.append(Entry(rest, e.count, e.action, e.causality))
        st.loc_cib = _merge_entries(kept + self._compute(st, region), self.space)
        self.dirty.add(key)

    # ------------------------------------------------------------ events

    def start(self) -> None:
        """Compute every hosted node from scratch (children assumed zero)."""
        for key in sorted(self.nodes):
            st = self.nodes[key]
            if st.plan.kind == "equal":
                st.violations = equal_node_violations(st.node, st.plan, self.dp)
                continue
            st.loc_cib = _merge_entries(self._compute(st, st.plan.packet_space), self.space)
            self.dirty.add(key)

    def handle_update(self, msg: UpdateMessage) -> None:
        plan = self.plans.get(msg.plan_id)
        if plan is None or plan.version != msg.version:
            return  # stale plan: drop
        key = (msg.plan_id, msg.up)
        st = self.nodes.get(key)
        if st is None or msg.down not in st.cib_in:
            raise ProtocolError(f"{self.device}: UPDATE for unknown link {msg.down}->{msg.up}")
        msg.check()
        self.received += 1
        v = msg.down
        w = self.space.FALSE
        for p in msg.withdrawn:
            w = w | p
        # step 1: replace the withdrawn part of CIBIn(v)
        trimmed = [(p - w, c) for p, c in st.cib_in[v]]
        st.cib_in[v] = _merge_counts([x for x in trimmed if not x[0].is_empty()] + list(msg.incoming),
                                     self.space)
        # step 2: rewrite entries whose evidence from v was withdrawn
        trunc = self._trunc(plan)
        out = []
        changed = False
        for e in st.loc_cib:
            cited = next((i for i, (c, _, _) in enumerate(e.causality) if c == v), None)
            if cited is None or not e.pred.overlaps(w):
                out.append(e)
                continue
            changed = True
            rest = e.pred - w
            if not rest.is_empty():
                out.append(Entry(rest, e.count, e.action, e.causality))
            for q, k in msg.incoming:
                x = e.pred & q
                if x.is_empty():
                    continue
                caus = list(e.causality)
                caus[cited] = (v, q, k)
                caus = tuple(caus)
                out.append(Entry(x, self._count(st, e.action, caus, trunc), e.action, caus))
        if changed:
            st.loc_cib = _merge_entries(out, self.space)
            self.dirty.add(key)

    def handle_internal(self, delta: Delta) -> None:
        """Re-derive every hosted node over the packets whose action changed."""
        region = self.space.FALSE
        for p, _, _ in delta:
            region = region | p
        if region.is_empty():
            return
        for key in sorted(self.nodes):
            self._recompute(key, region)

    def flush(self) -> list[UpdateMessage]:
        """Announce result changes of dirty nodes, one UPDATE per parent."""
        out = []
        for key in sorted(self.dirty):
            st = self.nodes[key]
            current = st.result()
            withdrawn: dict[CountSet, Predicate] = {}
            incoming: dict[CountSet, Predicate] = {}
            for pa, ca in st.announced:
                for pc, cc in current:
                    if ca == cc:
                        continue
                    x = pa & pc
                    if x.is_empty():
                        continue
                    withdrawn[ca] = withdrawn.get(ca, self.space.FALSE) | x
                    incoming[cc] = incoming.get(cc, self.space.FALSE) | x
            st.announced = current
            if not incoming:
                continue
            w_list = [withdrawn[c] for c in sorted(withdrawn, key=sorted)]
            i_list = [(incoming[c], c) for c in sorted(incoming, key=sorted)]
            for parent in st.node.parents:
                msg = UpdateMessage(st.plan.plan_id, st.plan.version, parent, st.node.id, w_list, i_list)
                msg.check()
                out.append(msg)
        self.dirty.clear()
        return out

    # ---------------------------------------------------------- inspection

    def result(self, plan_id: str, node_id: str) -> list[tuple[Predicate, CountSet]]:
        return self.nodes[(plan_id, node_id)].result()

    def equal_local_check(self) -> list[tuple[str, str, Predicate]]:
        """(plan, node, violating packets) for every hosted equal-plan node."""
        out = []
        for (pid, nid), st in sorted(self.nodes.items()):
            if st.plan.kind == "equal" and st.violations is not None and not st.violations.is_empty():
                out.append((pid, nid, st.violations))
        return out

    def check_invariants(self) -> None:
        for (pid, nid), st in self.nodes.items():
            if st.plan.kind == "equal":
                continue
            ps = st.plan.packet_space
            seen = self.space.FALSE
            for e in st.loc_cib:
                if e.pred.overlaps(seen):
                    raise ProtocolError(f"{nid}: LocCIB predicates overlap")
                seen = seen | e.pred
                if e.action is not None:
                    trunc = self._trunc(st.plan)
                    if self._count(st, e.action, e.causality, trunc) != e.count:
                        raise ProtocolError(f"{nid}: count does not follow from causality")
            if seen != ps:
                raise ProtocolError(f"{nid}: LocCIB does not cover the packet space")

    def snapshot(self) -> dict:
        """Canonical view of all counting state, for comparing runs."""
        snap = {}
        for (pid, nid), st in sorted(self.nodes.items()):
            if st.plan.kind == "equal":
                snap[(pid, nid)] = ("equal", st.violations.node if st.violations is not None else None)
                continue
            loc = tuple((e.pred.node, tuple(sorted(e.count)), str(e.action),
                         tuple((c, tuple(sorted(k))) for c, _, k in e.causality)) for e in st.loc_cib)
            cib = tuple((c, tuple((p.node, tuple(sorted(k))) for p, k in part))
                        for c, part in sorted(st.cib_in.items()))
            snap[(pid, nid)] = (loc, cib)
        return snap
