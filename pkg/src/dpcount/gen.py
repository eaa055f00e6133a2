"""Scenario generators: data-center fabrics, random small instances, update streams."""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from .dataplane import ActionGroup, DataPlane, Fib, FibRule, FibUpdate, Topology
from .formats import write_fibs, write_prefixes, write_topology
from .pathexpr import ANY_PATH, Lit, Neg, PathExpr, Star, Wild, alt, conj, seq
from .predicate import DEFAULT_SPACE, HeaderSpace
from .reqlang import (
    BAnd, BNot, BOr, Behavior, Equal, Exist, Fabric, Leaf, PsAtom, Requirement, render_templates,
)
from .simnet import ScriptedEvent

TEMPLATE_KINDS = ("torToTorShortest", "torToTorEcmp", "torToPr", "prToTor", "failureEcmp")


class GenError(ValueError):
    pass


@dataclass
class Network:
    topology: Topology
    fibs: dict[str, Fib]
    prefixes: dict[str, list[str]]  # device -> delivered dst CIDRs
    fabric: Fabric = field(default_factory=Fabric)

    def dataplane(self, space: HeaderSpace = DEFAULT_SPACE) -> DataPlane:
        pref = {d: [space.from_cidr("dst", c) for c in cs] for d, cs in self.prefixes.items()}
        return DataPlane(self.topology, {d: f.copy() for d, f in self.fibs.items()}, pref, space)

    def write(self, out: Path, templates=TEMPLATE_KINDS) -> list[Path]:
        out.mkdir(parents=True, exist_ok=True)
        files = {
            "topology.txt": write_topology(self.topology),
            "fib.txt": write_fibs(self.fibs),
            "prefixes.txt": write_prefixes(self.prefixes),
        }
        for kind in templates:
            reqs = render_templates(kind, self.fabric)
            files[f"req_{kind}.txt"] = "".join(f"{r}\n" for r in reqs)
        written = []
        for name, text in files.items():
            (out / name).write_text(text)
            written.append(out / name)
        return written


def _distances(topo: Topology, dst: str) -> dict[str, int]:
    adj = topo.adjacency()
    dist = {dst: 0}
    q = deque([dst])
    while q:
        u = q.popleft()
        for w in adj[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                q.append(w)
    return dist


def shortest_path_fibs(topo: Topology, prefixes: dict[str, list[str]], ecmp: str = "ALL",
                       space: HeaderSpace = DEFAULT_SPACE) -> dict[str, Fib]:
    """One rule per foreign prefix, forwarding along every shortest path.

    A single next hop is always written as ALL.
    """
    adj = topo.adjacency()
    fibs = {d: Fib() for d in topo.devices}
    prio = {d: 1 for d in topo.devices}
    for owner in sorted(prefixes):
        dist = _distances(topo, owner)
        for cidr in prefixes[owner]:
            for d in sorted(topo.devices):
                if d == owner or d not in dist:
                    continue
                hops = [n for n in adj[d] if dist.get(n) == dist[d] - 1]
                kind = ecmp if len(hops) > 1 else "ALL"
                fibs[d].add(FibRule(prio[d], space.from_cidr("dst", cidr), ActionGroup.make(kind, hops), "-", cidr))
                prio[d] += 1
    return fibs


def fattree(k: int, ecmp: str = "ALL", space: HeaderSpace = DEFAULT_SPACE) -> Network:
    """k-ary fat-tree: k pods of k/2 ToRs and k/2 aggregation switches, (k/2)^2 cores.

    ToR ``t<pod>_<i>`` owns 10.<pod>.<i>.0/24.
    """
    if k < 4 or k % 2:
        raise GenError(f"fat-tree arity must be even and at least 4, got {k}")
    h = k // 2
    topo = Topology()
    tors, pods, prefixes = {}, {}, {}
    for p in range(k):
        for i in range(h):
            t, a = f"t{p}_{i}", f"a{p}_{i}"
            topo.add_device(t)
            topo.add_device(a)
            tors[t] = f"10.{p}.{i}.0/24"
            pods[t] = p
            prefixes[t] = [tors[t]]
        for i in range(h):
            for j in range(h):
                topo.add_link(f"t{p}_{i}", f"a{p}_{j}")
    for i in range(h):
        for j in range(h):
            c = f"c{i}_{j}"
            topo.add_device(c)
            for p in range(k):
                topo.add_link(f"a{p}_{i}", c)
    fibs = shortest_path_fibs(topo, prefixes, ecmp, space)
    return Network(topo, fibs, prefixes, Fabric(tors, pods))


def two_pod_clos(ecmp: str = "ALL", space: HeaderSpace = DEFAULT_SPACE) -> Network:
    """Two pods of two ToRs and two aggregation switches each, joined by two spines."""
    topo = Topology()
    tors, pods, prefixes = {}, {}, {}
    for p in range(2):
        for i in range(2):
            t = f"t{p}_{i}"
            topo.add_device(t)
            topo.add_device(f"a{p}_{i}")
            tors[t] = f"10.{p}.{i}.0/24"
            pods[t] = p
            prefixes[t] = [tors[t]]
        for i in range(2):
            for j in range(2):
                topo.add_link(f"t{p}_{i}", f"a{p}_{j}")
    for s in range(2):
        topo.add_device(f"s{s}")
        for p in range(2):
            for i in range(2):
                topo.add_link(f"a{p}_{i}", f"s{s}")
    fibs = shortest_path_fibs(topo, prefixes, ecmp, space)
    return Network(topo, fibs, prefixes, Fabric(tors, pods))


def missing_hop_faults(net: Network) -> list[FibUpdate]:
    """Every single-hop removal from a forwarding group, as a rule modification."""
    out = []
    for d in sorted(net.fibs):
        for r in net.fibs[d].ordered():
            for h in r.action.hops:
                rest = [x for x in r.action.hops if x != h]
                kind = r.action.kind if len(rest) > 1 else "ALL"
                out.append(FibUpdate("modify", d, FibRule(r.priority, r.match, ActionGroup.make(kind, rest),
                                                          r.src, r.dst)))
    return out


# ------------------------------------------------------------ update streams

def random_updates(net: Network, count: int, seed: int, space: HeaderSpace = DEFAULT_SPACE) -> list[FibUpdate]:
    """A stream of single-rule updates typical of fabric churn.

    Mix: re-weighting an ECMP group to a non-empty subset of its shortest
    next hops (40%), installing a more specific /25 inside a ToR prefix
    along a subset of shortest hops (30%), removing such a specific
    (20%), and redirecting a rule to an arbitrary neighbor (10%).  The
    stream is valid when applied in order to ``net``.
    """
    rng = random.Random(seed)
    topo = net.topology
    adj = topo.adjacency()
    owner = {c: d for d, cs in net.prefixes.items() for c in cs}
    dist = {d: _distances(topo, d) for d in net.prefixes}
    fibs = {d: f.copy() for d, f in net.fibs.items()}
    base = {d: [r for r in f.ordered()] for d, f in fibs.items()}
    specifics: dict[str, list[int]] = {d: [] for d in fibs}
    next_prio = {d: max((r.priority for r in f), default=0) + 1 for d, f in fibs.items()}
    devices = sorted(d for d in fibs if base[d])
    ecmp = next((r.action.kind for f in fibs.values() for r in f if len(r.action.hops) > 1), "ALL")
    out = []

    def shortest(d, cidr):
        dd = dist[owner[cidr]]
        return [n for n in adj[d] if dd.get(n) == dd[d] - 1]

    def group(hops):
        return ActionGroup.make(ecmp if len(hops) > 1 else "ALL", hops)

    while len(out) < count:
        d = rng.choice(devices)
        roll = rng.random()
        r = rng.choice(base[d])
        cidr = r.dst
        if roll < 0.4:
            hops = shortest(d, cidr)
            pick = sorted(rng.sample(hops, rng.randint(1, len(hops))))
            upd = FibUpdate("modify", d, FibRule(r.priority, r.match, group(pick), r.src, r.dst))
        elif roll < 0.7:
            half = rng.randint(0, 1)
            net_addr = cidr.split("/")[0].rsplit(".", 1)[0] + f".{128 * half}/25"
            hops = shortest(d, cidr)
            pick = sorted(rng.sample(hops, rng.randint(1, len(hops))))
            prio = next_prio[d]
            next_prio[d] += 1
            specifics[d].append(prio)
            upd = FibUpdate("insert", d, FibRule(prio, space.from_cidr("dst", net_addr), group(pick),
                                                 "-", net_addr))
        elif roll < 0.9:
            if not specifics[d]:
                continue
            prio = specifics[d].pop(rng.randrange(len(specifics[d])))
            upd = FibUpdate("delete", d, fibs[d].rules[prio])
        else:
            hop = rng.choice(adj[d])
            upd = FibUpdate("modify", d, FibRule(r.priority, r.match, ActionGroup.make("ALL", [hop]), r.src, r.dst))
        _apply_to_fib(fibs[d], upd)
        if upd.kind == "modify":
            base[d] = [upd.rule if x.priority == upd.rule.priority else x for x in base[d]]
        out.append(upd)
    return out


def _apply_to_fib(fib: Fib, upd: FibUpdate) -> None:
    if upd.kind == "delete":
        del fib.rules[upd.rule.priority]
    else:
        fib.rules[upd.rule.priority] = upd.rule


def update_events(updates: list[FibUpdate], spacing_us: float = 1000.0) -> list[ScriptedEvent]:
    return [ScriptedEvent(i * spacing_us, "update", u) for i, u in enumerate(updates)]


# ------------------------------------------------------- random small cases

PREFIX = "10.0.0.0/23"
_DSTS = ["10.0.0.0/23", "10.0.0.0/24", "10.0.1.0/24", "10.0.0.0/25", "10.0.1.128/25"]
_NAMES = "ABCDEFGH"


@dataclass
class Instance:
    dataplane: DataPlane
    requirement: Requirement
    seed: int


def random_network(rng: random.Random, max_devices: int = 8, max_any: int = 3,
                   full_delivery: bool = False, space: HeaderSpace = DEFAULT_SPACE) -> DataPlane:
    n = rng.randint(3, max_devices)
    names = list(_NAMES[:n])
    topo = Topology()
    for d in names:
        topo.add_device(d)
    for i in range(1, n):
        topo.add_link(names[i], names[rng.randrange(i)])
    for i in range(n):
        for j in range(i + 1, n):
            if not topo.has_link(names[i], names[j]) and rng.random() < 0.25:
                topo.add_link(names[i], names[j])
    adj = topo.adjacency()
    fibs = {}
    for d in names:
        rules = []
        prios = rng.sample(range(1, 20), rng.randint(0, 3))
        for p in prios:
            dst = rng.choice(_DSTS)
            r = rng.random()
            if r < 0.1:
                action = ActionGroup.make("ALL", [])
            else:
                width = rng.randint(1, min(max_any, len(adj[d])))
                hops = rng.sample(adj[d], width)
                kind = "ANY" if rng.random() < 0.5 else "ALL"
                action = ActionGroup.make(kind, hops)
            rules.append(FibRule(p, space.from_cidr("dst", dst), action, "-", dst))
        fibs[d] = Fib(rules)
    prefixes = {}
    for d in rng.sample(names, rng.randint(1, 2)):
        cidr = PREFIX if full_delivery else rng.choice(_DSTS[:3])
        prefixes[d] = [space.from_cidr("dst", cidr)]
    return DataPlane(topo, fibs, prefixes, space)


def random_path(rng: random.Random, names: list[str], depth: int = 4) -> PathExpr:
    if depth <= 1:
        return Lit(rng.choice(names)) if rng.random() < 0.7 else Wild()
    r = rng.random()
    if r < 0.35:
        return seq(*[random_path(rng, names, depth - 1) for _ in range(rng.randint(2, 3))])
    if r < 0.5:
        return alt(random_path(rng, names, depth - 1), random_path(rng, names, depth - 1))
    if r < 0.65:
        return Star(random_path(rng, names, depth - 1))
    if r < 0.72:
        return conj(random_path(rng, names, depth - 1), random_path(rng, names, depth - 1))
    if r < 0.77:
        return Neg(random_path(rng, names, depth - 1))
    if r < 0.9:
        # the common shape: start somewhere, end somewhere
        return seq(Lit(rng.choice(names)), ANY_PATH, Lit(rng.choice(names)))
    return Lit(rng.choice(names))


_CMPS = (">=", ">", "<=", "<", "==")


def random_leaf(rng: random.Random, names: list[str], cmp: str | None = None) -> Leaf:
    return Leaf(Exist(cmp or rng.choice(_CMPS), rng.randint(0, 2)), random_path(rng, names))


def random_behavior(rng: random.Random, names: list[str], depth: int = 2) -> Behavior:
    if depth == 0 or rng.random() < 0.4:
        return random_leaf(rng, names)
    r = rng.random()
    if r < 0.4:
        return BAnd(tuple(random_behavior(rng, names, depth - 1) for _ in range(2)))
    if r < 0.8:
        return BOr(tuple(random_behavior(rng, names, depth - 1) for _ in range(2)))
    return BNot(random_behavior(rng, names, depth - 1))


def random_requirement(rng: random.Random, dp: DataPlane, kind: str = "count",
                       cmp: str | None = None) -> Requirement:
    """``kind``: count (boolean combination), scalar (one leaf) or equal."""
    names = sorted(dp.topology.devices)
    ingress = tuple(sorted(rng.sample(names, rng.randint(1, min(2, len(names))))))
    # without a dstIP constraint the packet space may be partly delivered
    ps = PsAtom("dst", PREFIX) if kind == "equal" or rng.random() < 0.5 else PsAtom("src", "0.0.0.0/1")
    if kind == "scalar":
        b: Behavior = random_leaf(rng, names, cmp)
    elif kind == "equal":
        dests = sorted(d for d, p in dp.delivery.items() if not p.is_empty())
        path = seq(Lit(ingress[0]), ANY_PATH, Lit(rng.choice(dests))) if rng.random() < 0.7 \
            else random_path(rng, names)
        b = Leaf(Equal(), path)
        if rng.random() < 0.3:
            b = BAnd((b, random_leaf(rng, names)))
        ingress = ingress[:1]
    else:
        b = random_behavior(rng, names)
    return Requirement(ps, ingress, b)
