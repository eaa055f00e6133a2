"""Compile requirements into product DAGs and per-device counting tasks.

The DAG (``DvNet``) is the product of the topology with a DFA tracking one
or more path expressions, unfolded over simple paths so that it is acyclic
and every DAG path is a loop-free device sequence.  Nodes that cannot reach
an accepting state are dropped, and nodes with the same device, the same
accepted expressions and the same children are merged bottom-up.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .automata import Dfa, compile_many
from .dataplane import DataPlane, Topology
from .pathexpr import (
    ANY_PATH, Conj, Lit, LoopFree, Neg, PathExpr, Star, Wild, alt, conj, loop_free_regex, seq,
    substitute,
)
from .predicate import Predicate
from .reqlang import (
    BAnd, Behavior, Equal, Exist, Leaf, PrefixMismatch, Requirement, ValidationError, destinations,
    desugar, space_predicate, validate,
)


class PlanError(Exception):
    pass


class IngressUnmatched(PlanError):
    pass


# -------------------------------------------------------------------- DvNet

@dataclass
class DvNode:
    id: str
    dev: str  # device name in the (possibly rewritten) topology
    phys: str  # physical device hosting the node
    state: int
    owners: frozenset  # expressions accepted here
    children: list[str] = field(default_factory=list)
    parents: list[str] = field(default_factory=list)

    @property
    def accepting(self) -> bool:
        return bool(self.owners)


@dataclass
class DvNet:
    nodes: dict[str, DvNode]
    sources: dict[str, str]  # ingress -> node id
    order: list[str]  # topological, sources first

    @property
    def accepting(self) -> set[str]:
        return {i for i, n in self.nodes.items() if n.accepting}

    def edges(self) -> list[tuple[str, str]]:
        return [(u, v) for u in self.order for v in self.nodes[u].children]

    def reverse_order(self) -> list[str]:
        return list(reversed(self.order))

    def reachable_from(self, src: str) -> set[str]:
        seen = {src}
        stack = [src]
        while stack:
            for c in self.nodes[stack.pop()].children:
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return seen

    def paths(self, src: str) -> list[tuple[str, ...]]:
        """Device sequences of every source-to-accepting path (for checks on small nets)."""
        out = []

        def walk(nid: str, acc: tuple[str, ...]):
            n = self.nodes[nid]
            acc = acc + (n.dev,)
            if n.accepting:
                out.append(acc)
            for c in n.children:
                walk(c, acc)

        walk(src, ())
        return out

    def to_dot(self, name: str = "dvnet") -> str:
        lines = [f"digraph {name} {{", "  rankdir=LR;"]
        for nid in self.order:
            n = self.nodes[nid]
            shape = "doublecircle" if n.accepting else "circle"
            extra = ", style=bold" if nid in self.sources.values() else ""
            lines.append(f'  "{nid}" [shape={shape}{extra}];')
        for u, v in self.edges():
            lines.append(f'  "{u}" -> "{v}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _node_name(dev: str, i: int) -> str:
    return f"{dev}.{i}" if dev[-1:].isdigit() else f"{dev}{i}"


def build_dvnet(dfa: Dfa, topo: Topology, ingress, full_delivery: set[str] = frozenset(),
                merge: bool = True, allow_unmatched: bool = False) -> DvNet:
    """Unfold the product of ``dfa`` and ``topo`` from every ingress.

    Devices in ``full_delivery`` deliver the whole packet space, so their
    nodes get no children.  Ingresses whose source node would be dead raise
    ``IngressUnmatched`` unless ``allow_unmatched`` is set (they are then
    simply absent from ``sources``).
    """
    adj = topo.adjacency()
    phys = topo.physical
    memo: dict[tuple, int | None] = {}
    intern: dict[tuple, int] = {}
    raw: list[dict] = []  # indexed by class id

    def visit(dev: str, q: int, visited: frozenset) -> int | None:
        key = (dev, q, visited)
        if key in memo:
            return memo[key]
        owners = dfa.outputs[q]
        kids = set()
        if phys(dev) not in full_delivery:
            for n in adj[dev]:
                if phys(n) in visited:
                    continue
                q2 = dfa.step(q, n)
                if q2 is None:
                    continue
                c = visit(n, q2, visited | {phys(n)})
                if c is not None:
                    kids.add(c)
        if not owners and not kids:
            memo[key] = None
            return None
        kid_list = tuple(sorted(kids))
        sig = (dev, tuple(sorted(owners)), kid_list) if merge else key
        cls = intern.get(sig)
        if cls is None:
            cls = intern[sig] = len(raw)
            raw.append({"dev": dev, "state": q, "owners": owners, "children": kid_list,
                        "tiebreak": (q, tuple(sorted(visited)))})
        memo[key] = cls
        return cls

    sources_raw = {}
    for ing in dict.fromkeys(ingress):
        if ing not in adj:
            raise PlanError(f"unknown ingress {ing}")
        q0 = dfa.step(dfa.initial, ing) if dfa.num_states else None
        cls = visit(ing, q0, frozenset({phys(ing)})) if q0 is not None else None
        if cls is None:
            if allow_unmatched:
                continue
            raise IngressUnmatched(f"no accepted path can start at ingress {ing}")
        sources_raw[ing] = cls

    # canonical structural hashes; children always get smaller class ids
    digest: list[str] = []
    for info in raw:
        body = repr((info["dev"], sorted(info["owners"]), sorted(digest[c] for c in info["children"])))
        digest.append(hashlib.sha1(body.encode()).hexdigest())

    live = set()
    stack = list(sources_raw.values())
    while stack:
        c = stack.pop()
        if c in live:
            continue
        live.add(c)
        stack.extend(raw[c]["children"])
    # longest distance from a source; parents have larger class ids
    layer = {c: 0 for c in live}
    for c in sorted(live, reverse=True):
        for k in raw[c]["children"]:
            layer[k] = max(layer[k], layer[c] + 1)
    by_dev: dict[str, list[int]] = {}
    for c in live:
        by_dev.setdefault(raw[c]["dev"], []).append(c)
    names = {}
    for dev, group in by_dev.items():
        group.sort(key=lambda c: (layer[c], digest[c], raw[c]["tiebreak"]))
        for i, c in enumerate(group, 1):
            names[c] = _node_name(dev, i)
    nodes = {}
    for c in live:
        info = raw[c]
        nodes[names[c]] = DvNode(names[c], info["dev"], phys(info["dev"]), info["state"], info["owners"],
                                 sorted(names[k] for k in info["children"]))
    for n in nodes.values():
        for k in n.children:
            nodes[k].parents.append(n.id)
    for n in nodes.values():
        n.parents.sort()
    order = [names[c] for c in sorted(live, key=lambda c: (layer[c], names[c]))]
    return DvNet(nodes, {ing: names[c] for ing, c in sources_raw.items()}, order)


# -------------------------------------------------------------------- tasks

@dataclass
class DeviceTask:
    node: str
    device: str
    downstream: list[tuple[str, str]]  # (node id, physical device)
    upstream: list[tuple[str, str]]
    m: int
    mode: str  # fullCount | minInfo | equalLocal
    packet_space: Predicate
    accepting: bool = False
    owners: frozenset = frozenset()
    cmp: tuple[str, int] | None = None  # comparator for minInfo

    def describe(self) -> str:
        mode = self.mode if self.cmp is None else f"{self.mode}({self.cmp[0]},{self.cmp[1]})"
        down = ",".join(n for n, _ in self.downstream) or "-"
        up = ",".join(n for n, _ in self.upstream) or "-"
        acc = "accept" + "".join(f" {i}" for i in sorted(self.owners)) if self.accepting else "inner"
        return f"task {self.node} on {self.device} m={self.m} {mode} {acc} down={down} up={up}"


@dataclass
class Plan:
    """A compiled counting (or local equal-check) problem for one requirement part."""

    plan_id: str
    kind: str  # count | equal
    requirement: Requirement
    behavior: Behavior | None  # counted part; None for equal plans
    paths: list[PathExpr]  # one per count dimension
    leaf_dims: list[int]  # component read by each leaf of ``behavior``
    dvnet: DvNet
    topology: Topology
    packet_space: Predicate
    tasks: list[DeviceTask]
    unmatched: list[str] = field(default_factory=list)  # ingresses with no source node
    version: int = 1

    @property
    def m(self) -> int:
        return len(self.paths)

    def tasks_on(self, device: str) -> list[DeviceTask]:
        return [t for t in self.tasks if t.device == device]

    def serialize(self) -> str:
        out = [f"plan {self.plan_id} kind={self.kind} version={self.version}",
               f"requirement {self.requirement}",
               f"packet_space {self.packet_space.describe()}"]
        for i, p in enumerate(self.paths):
            out.append(f"path {i} {p}")
        for v in sorted(self.topology.virtual_of):
            out.append(f"virtual {v} {self.topology.virtual_of[v]}")
        for ing in sorted(self.dvnet.sources):
            out.append(f"source {ing} {self.dvnet.sources[ing]}")
        for ing in self.unmatched:
            out.append(f"unmatched {ing}")
        for nid in self.dvnet.order:
            n = self.dvnet.nodes[nid]
            out.append(f"node {nid} dev={n.dev} state={n.state} owners={','.join(map(str, sorted(n.owners))) or '-'}")
        for u, v in self.dvnet.edges():
            out.append(f"edge {u} {v}")
        for t in self.tasks:
            out.append(t.describe())
        return "\n".join(out) + "\n"


def _make_tasks(net: DvNet, m: int, mode: str, ps: Predicate, cmp=None) -> list[DeviceTask]:
    tasks = []
    for nid in net.order:
        n = net.nodes[nid]
        if mode == "equalLocal":
            down, up = [], []
        else:
            down = [(c, net.nodes[c].phys) for c in n.children]
            up = [(p, net.nodes[p].phys) for p in n.parents]
        tasks.append(DeviceTask(nid, n.phys, down, up, m, mode, ps, n.accepting, n.owners, cmp))
    return tasks


# ------------------------------------------------------------------ planning

@dataclass
class PlanOptions:
    min_info: bool = False
    merge: bool = True
    allow_unmatched: bool = False
    virtual_destinations: bool = True


def strip_loop_free(e: PathExpr, alphabet) -> PathExpr:
    """Replace loop-freedom subterms by ``.*``.

    Product paths are simple by construction and every infix of a simple
    path is simple, so on the words the DAG can produce both terms agree.
    """
    lf = loop_free_regex(alphabet)

    def go(x: PathExpr) -> PathExpr:
        if isinstance(x, LoopFree) or x == lf:
            return ANY_PATH
        if isinstance(x, (Lit, Wild)):
            return x
        if isinstance(x, Star):
            return Star(go(x.item))
        if isinstance(x, Neg):
            return Neg(go(x.item))
        if isinstance(x, Conj):
            items = [go(i) for i in x.items]
            kept = [i for i in items if i != ANY_PATH]
            return conj(*kept) if kept else ANY_PATH
        return type(x)(tuple(go(i) for i in x.items))

    return go(e)


def split_behavior(behavior: Behavior) -> tuple[list[Leaf], Behavior | None]:
    items = behavior.items if isinstance(behavior, BAnd) else (behavior,)
    eq = [i for i in items if isinstance(i, Leaf) and isinstance(i.op, Equal)]
    rest = [i for i in items if not (isinstance(i, Leaf) and isinstance(i.op, Equal))]
    if not rest:
        return eq, None
    return eq, rest[0] if len(rest) == 1 else BAnd(tuple(rest))


def _dims(behavior: Behavior) -> tuple[list[PathExpr], list[int]]:
    paths: list[PathExpr] = []
    leaf_dims = []
    for lf in behavior.leaves():
        if not isinstance(lf.op, Exist):
            raise ValidationError("equal is only allowed as a top-level conjunct")
        if lf.path not in paths:
            paths.append(lf.path)
        leaf_dims.append(paths.index(lf.path))
    return paths, leaf_dims


def _full_delivery(dp: DataPlane, ps: Predicate) -> set[str]:
    if ps.is_empty():
        return set()
    return {d for d, p in dp.delivery.items() if ps.issubset(p)}


def plan_requirement(req: Requirement, dp: DataPlane, options: PlanOptions | None = None,
                     plan_id: str = "r0") -> list[Plan]:
    """Desugar, validate and compile one requirement into its plans.

    Top-level ``equal`` conjuncts become local-check plans; the rest of the
    behavior becomes a single counting plan.
    """
    options = options or PlanOptions()
    devices = dp.topology.devices
    req = desugar(req, devices)
    validate(req, devices, _prefix_lists(dp), dp.space)
    eq_leaves, counted = split_behavior(req.behavior)
    plans = []
    if counted is not None:
        paths, leaf_dims = _dims(counted)
        if len(paths) == 1:
            plans.append(plan_single(req, counted, paths, leaf_dims, dp, options, plan_id))
        else:
            dests = [destinations(strip_loop_free(p, devices), devices) for p in paths]
            shared = dests[0] if all(d == dests[0] and len(d) == 1 for d in dests) else None
            if shared and options.virtual_destinations:
                plans.append(plan_compound_same_dest(req, counted, paths, leaf_dims, next(iter(shared)),
                                                     dp, options, plan_id))
            else:
                plans.append(plan_compound_different_dest(req, counted, paths, leaf_dims, dp, options, plan_id))
    for i, leaf in enumerate(eq_leaves):
        plans.append(plan_equal(req, leaf, dp, options, f"{plan_id}e{i}"))
    return plans


def _prefix_lists(dp: DataPlane) -> dict[str, list[Predicate]]:
    return {d: [p] for d, p in dp.delivery.items() if not p.is_empty()}


def _count_plan(req, behavior, paths, leaf_dims, dfa, topo, dp, options, plan_id) -> Plan:
    ps = space_predicate(req.packet_space, dp.space)
    net = build_dvnet(dfa, topo, req.ingress, _full_delivery(dp, ps), options.merge, options.allow_unmatched)
    cmp = None
    if options.min_info and isinstance(behavior, Leaf) and len(paths) == 1:
        cmp = (behavior.op.cmp, behavior.op.n)
    mode = "minInfo" if cmp else "fullCount"
    unmatched = [i for i in dict.fromkeys(req.ingress) if i not in net.sources]
    return Plan(plan_id, "count", req, behavior, list(paths), list(leaf_dims), net, topo, ps,
                _make_tasks(net, len(paths), mode, ps, cmp), unmatched)


def plan_single(req, behavior, paths, leaf_dims, dp, options, plan_id) -> Plan:
    devices = dp.topology.devices
    dfa = compile_many([strip_loop_free(paths[0], devices)], devices)
    return _count_plan(req, behavior, paths, leaf_dims, dfa, dp.topology, dp, options, plan_id)


def plan_compound_different_dest(req, behavior, paths, leaf_dims, dp, options, plan_id) -> Plan:
    devices = dp.topology.devices
    dfa = compile_many([strip_loop_free(p, devices) for p in paths], devices)
    return _count_plan(req, behavior, paths, leaf_dims, dfa, dp.topology, dp, options, plan_id)


def virtual_name(dev: str, i: int) -> str:
    return f"{dev}^{i}"


def rewrite_for_destination(topo: Topology, dest: str, m: int) -> Topology:
    """Replace ``dest`` by ``m`` virtual copies sharing its neighbors."""
    out = Topology(set(topo.devices) - {dest}, set(), dict(topo.virtual_of))
    copies = [virtual_name(dest, i) for i in range(1, m + 1)]
    for v in copies:
        out.devices.add(v)
        out.virtual_of[v] = topo.physical(dest)
    for link in topo.links:
        if dest in link:
            (other,) = link - {dest}
            for v in copies:
                out.links.add(frozenset((v, other)))
        else:
            out.links.add(link)
    return out


def plan_compound_same_dest(req, behavior, paths, leaf_dims, dest, dp, options, plan_id) -> Plan:
    """Count expressions that share one destination through virtual copies of it.

    Expression ``i`` is retargeted to copy ``i``; the union is restricted
    to paths visiting at most one copy, and a device forwarding to the
    physical destination reaches all copies at once.
    """
    if dest in req.ingress:
        raise PlanError(f"destination {dest} is also an ingress")
    devices = dp.topology.devices
    m = len(paths)
    topo = rewrite_for_destination(dp.topology, dest, m)
    copies = [virtual_name(dest, i) for i in range(1, m + 1)]
    others = [Lit(d) for d in sorted(topo.devices) if d not in copies]
    rest = Star(alt(*others)) if others else Star(Neg(ANY_PATH))
    at_most_one = alt(rest, seq(rest, alt(*(Lit(c) for c in copies)), rest))
    exprs = []
    for i, p in enumerate(paths):
        p2 = substitute(strip_loop_free(p, devices), {dest: copies[i]})
        exprs.append(conj(p2, at_most_one))
    dfa = compile_many(exprs, topo.devices)
    return _count_plan(req, behavior, paths, leaf_dims, dfa, topo, dp, options, plan_id)


def plan_naive(req: Requirement, dp: DataPlane, options: PlanOptions | None = None,
               plan_id: str = "r0") -> list[Plan]:
    """One independent single-expression plan per count dimension.

    Combining their results by cross product ignores that the dimensions
    share universes; it exists to demonstrate the resulting false alarms.
    """
    options = options or PlanOptions()
    _, counted = split_behavior(req.behavior)
    if counted is None:
        raise PlanError("no counted behavior")
    paths, leaf_dims = _dims(counted)
    out = []
    for i, p in enumerate(paths):
        out.append(plan_single(req, counted, [p], [0] * len(leaf_dims), dp, options, f"{plan_id}n{i}"))
    return out


def plan_equal(req: Requirement, leaf: Leaf, dp: DataPlane, options: PlanOptions | None = None,
               plan_id: str = "r0e0") -> Plan:
    """Local-contract plan: each node checks its own next hops, nothing is exchanged.

    Every device on the DAG must deliver either the whole packet space or
    none of it, and accepting devices must deliver all of it; otherwise
    the local contracts would not capture the requirement and
    ``PrefixMismatch`` is raised.
    """
    options = options or PlanOptions()
    devices = dp.topology.devices
    ps = space_predicate(req.packet_space, dp.space)
    dfa = compile_many([strip_loop_free(leaf.path, devices)], devices)
    full = _full_delivery(dp, ps)
    net = build_dvnet(dfa, dp.topology, req.ingress, full, options.merge, options.allow_unmatched)
    for n in net.nodes.values():
        part = dp.delivery[n.phys] & ps
        if n.accepting and n.phys not in full:
            raise PrefixMismatch(f"{n.phys} does not deliver the whole packet space of {leaf}")
        if not part.is_empty() and n.phys not in full:
            raise PrefixMismatch(f"{n.phys} delivers only part of the packet space of {leaf}")
    unmatched = [i for i in dict.fromkeys(req.ingress) if i not in net.sources]
    return Plan(plan_id, "equal", req, None, [leaf.path], [0], net, dp.topology, ps,
                _make_tasks(net, 1, "equalLocal", ps), unmatched)
