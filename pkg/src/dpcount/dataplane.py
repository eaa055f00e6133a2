"""Forwarding state: prioritized rules, next-hop groups and LEC tables."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .predicate import DEFAULT_SPACE, HeaderSpace, Predicate


class DataPlaneError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class ActionGroup:
    """Forward to every hop (ALL) or to exactly one unspecified hop (ANY).

    Instances are canonical: hops are sorted and unique, an empty group is
    always ``ALL()`` and a single-hop ANY is stored as ALL.
    """

    kind: str
    hops: tuple[str, ...]

    @staticmethod
    def make(kind: str, hops: Iterable[str]) -> "ActionGroup":
        kind = kind.upper()
        if kind not in ("ALL", "ANY"):
            raise DataPlaneError(f"unknown action kind {kind!r}")
        hs = tuple(sorted(set(hops)))
        if len(hs) <= 1:
            kind = "ALL"
        return ActionGroup(kind, hs)

    @property
    def is_drop(self) -> bool:
        return not self.hops

    def without(self, dead: set[str]) -> "ActionGroup":
        if not dead or not dead.intersection(self.hops):
            return self
        return ActionGroup.make(self.kind, (h for h in self.hops if h not in dead))

    def __str__(self) -> str:
        return f"{self.kind}{{{','.join(self.hops)}}}"


DROP = ActionGroup("ALL", ())


def fwd_all(*hops: str) -> ActionGroup:
    return ActionGroup.make("ALL", hops)


def fwd_any(*hops: str) -> ActionGroup:
    return ActionGroup.make("ANY", hops)


@dataclass(frozen=True)
class FibRule:
    priority: int
    match: Predicate
    action: ActionGroup
    # original text of the match, kept for serialization
    src: str = "-"
    dst: str = "-"


@dataclass(frozen=True)
class FibUpdate:
    kind: str  # insert | delete | modify | upsert (modify if the priority exists)
    device: str
    rule: FibRule


class Fib:
    """Rules of one device keyed by unique priority."""

    def __init__(self, rules: Iterable[FibRule] = ()):
        self.rules: dict[int, FibRule] = {}
        for r in rules:
            self.add(r)

    def add(self, rule: FibRule) -> None:
        if rule.priority in self.rules:
            raise DataPlaneError(f"duplicate priority {rule.priority}")
        self.rules[rule.priority] = rule

    def copy(self) -> "Fib":
        f = Fib()
        f.rules = dict(self.rules)
        return f

    def ordered(self) -> list[FibRule]:
        return [self.rules[p] for p in sorted(self.rules, reverse=True)]

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.ordered())

    def higher_than(self, priority: int, space: HeaderSpace) -> Predicate:
        out = space.FALSE
        for p, r in self.rules.items():
            if p > priority:
                out = out | r.match
        return out


def effective_action(rules: Iterable[FibRule], header: int) -> ActionGroup:
    """Action of the highest-priority rule matching ``header``."""
    best = None
    for r in rules:
        if r.match.contains(header) and (best is None or r.priority > best.priority):
            best = r
    return DROP if best is None else best.action


class LecTable:
    """Partition of the header space into classes with distinct actions."""

    def __init__(self, entries: dict[ActionGroup, Predicate], space: HeaderSpace):
        self.space = space
        self._by_action = {a: p for a, p in entries.items() if not p.is_empty()}

    @property
    def entries(self) -> list[tuple[Predicate, ActionGroup]]:
        return [(self._by_action[a], a) for a in sorted(self._by_action)]

    def action_map(self) -> dict[ActionGroup, Predicate]:
        return dict(self._by_action)

    def lookup(self, header: int) -> ActionGroup:
        for a, p in self._by_action.items():
            if p.contains(header):
                return a
        raise DataPlaneError("LEC table is not a partition")

    def restrict(self, region: Predicate) -> list[tuple[Predicate, ActionGroup]]:
        out = []
        for p, a in self.entries:
            x = p & region
            if not x.is_empty():
                out.append((x, a))
        return out

    def __eq__(self, other) -> bool:
        return isinstance(other, LecTable) and self._by_action == other._by_action

    def __repr__(self) -> str:
        return "LecTable(" + ", ".join(f"{a}:#{p.node}" for p, a in self.entries) + ")"

    def check(self) -> None:
        union = self.space.FALSE
        for p, _ in self.entries:
            if p.overlaps(union):
                raise DataPlaneError("LEC predicates overlap")
            union = union | p
        if not union.is_true():
            raise DataPlaneError("LEC predicates do not cover the header space")


def _scan(rules: list[FibRule], region: Predicate, space: HeaderSpace) -> dict[ActionGroup, Predicate]:
    cells: dict[ActionGroup, Predicate] = {}
    rest = region
    for r in rules:
        if rest.is_empty():
            break
        hit = r.match & rest
        if hit.is_empty():
            continue
        cells[r.action] = cells.get(r.action, space.FALSE) | hit
        rest = rest - hit
    if not rest.is_empty():
        cells[DROP] = cells.get(DROP, space.FALSE) | rest
    return cells


def build_lec_table(fib: Fib | Iterable[FibRule], space: HeaderSpace = DEFAULT_SPACE) -> LecTable:
    if not isinstance(fib, Fib):
        fib = Fib(fib)
    return LecTable(_scan(fib.ordered(), space.TRUE, space), space)


Delta = list[tuple[Predicate, ActionGroup, ActionGroup]]


def _diff_cells(old: list[tuple[Predicate, ActionGroup]], new: dict[ActionGroup, Predicate]) -> Delta:
    delta = []
    for po, ao in old:
        for an in sorted(new):
            if an == ao:
                continue
            x = po & new[an]
            if not x.is_empty():
                delta.append((x, ao, an))
    return delta


def apply_update(table: LecTable, fib: Fib, upd: FibUpdate) -> tuple[LecTable, Fib, Delta]:
    """Apply one rule change, recomputing only the region it can affect.

    Returns the new table, the new FIB and the list of
    ``(predicate, old_action, new_action)`` cells whose action changed.
    """
    space = table.space
    rule = upd.rule
    new_fib = fib.copy()
    kind = upd.kind
    if kind == "upsert":
        kind = "modify" if rule.priority in fib.rules else "insert"
    if kind == "insert":
        if rule.priority in fib.rules:
            raise DataPlaneError(f"{upd.device}: priority {rule.priority} already present")
        new_fib.rules[rule.priority] = rule
        touched = rule.match
    elif kind in ("delete", "modify"):
        old = fib.rules.get(rule.priority)
        if old is None:
            raise DataPlaneError(f"{upd.device}: no rule with priority {rule.priority}")
        if kind == "delete":
            del new_fib.rules[rule.priority]
            touched = old.match
        else:
            new_fib.rules[rule.priority] = rule
            touched = old.match | rule.match
    else:
        raise DataPlaneError(f"unknown update kind {upd.kind!r}")
    region = touched - fib.higher_than(rule.priority, space)
    if region.is_empty():
        return table, new_fib, []
    new_cells = _scan(new_fib.ordered(), region, space)
    old_cells = table.restrict(region)
    delta = _diff_cells(old_cells, new_cells)
    if not delta:
        return table, new_fib, []
    merged: dict[ActionGroup, Predicate] = {}
    for a, p in table.action_map().items():
        rest = p - region
        if not rest.is_empty():
            merged[a] = rest
    for a, p in new_cells.items():
        merged[a] = merged.get(a, space.FALSE) | p
    return LecTable(merged, space), new_fib, delta


@dataclass
class Topology:
    devices: set[str] = field(default_factory=set)
    links: set[frozenset] = field(default_factory=set)
    virtual_of: dict[str, str] = field(default_factory=dict)

    def add_device(self, name: str) -> None:
        self.devices.add(name)

    def add_link(self, a: str, b: str) -> None:
        if a == b:
            raise DataPlaneError(f"self-link on {a}")
        for d in (a, b):
            if d not in self.devices:
                raise DataPlaneError(f"link references unknown device {d}")
        self.links.add(frozenset((a, b)))

    def has_link(self, a: str, b: str) -> bool:
        return frozenset((a, b)) in self.links

    def neighbors(self, dev: str) -> list[str]:
        out = []
        for link in self.links:
            if dev in link:
                (other,) = link - {dev}
                out.append(other)
        return sorted(out)

    def physical(self, dev: str) -> str:
        return self.virtual_of.get(dev, dev)

    def adjacency(self) -> dict[str, list[str]]:
        adj: dict[str, list[str]] = {d: [] for d in self.devices}
        for link in self.links:
            a, b = sorted(link)
            adj[a].append(b)
            adj[b].append(a)
        for v in adj.values():
            v.sort()
        return adj

    def copy(self) -> "Topology":
        return Topology(set(self.devices), set(self.links), dict(self.virtual_of))

    @staticmethod
    def from_links(links: Iterable[tuple[str, str]], devices: Iterable[str] = ()) -> "Topology":
        t = Topology(set(devices))
        links = list(links)
        for a, b in links:
            t.devices.update((a, b))
        for a, b in links:
            t.add_link(a, b)
        return t


class DataPlane:
    """Topology, delivery prefixes and per-device FIBs with link state.

    Each device keeps its raw LEC table (ignoring link state); the effective
    table filters dead hops out of every group.
    """

    def __init__(self, topology: Topology, fibs: dict[str, Fib] | None = None,
                 prefixes: dict[str, list[Predicate]] | None = None,
                 space: HeaderSpace = DEFAULT_SPACE):
        self.topology = topology
        self.space = space
        self.fibs: dict[str, Fib] = {d: Fib() for d in topology.devices}
        for d, f in (fibs or {}).items():
            if d not in topology.devices:
                raise DataPlaneError(f"FIB for unknown device {d}")
            self.fibs[d] = f if isinstance(f, Fib) else Fib(f)
            for r in self.fibs[d]:
                for h in r.action.hops:
                    if not topology.has_link(d, h):
                        raise DataPlaneError(f"{d}: next hop {h} is not a neighbor")
        self.delivery: dict[str, Predicate] = {d: space.FALSE for d in topology.devices}
        for d, ps in (prefixes or {}).items():
            if d not in topology.devices:
                raise DataPlaneError(f"prefix for unknown device {d}")
            for p in ps:
                self.delivery[d] = self.delivery[d] | p
        self.down: set[frozenset] = set()
        self._raw = {d: build_lec_table(self.fibs[d], space) for d in sorted(topology.devices)}
        self._eff: dict[str, tuple] = {}

    def copy(self) -> "DataPlane":
        dp = DataPlane.__new__(DataPlane)
        dp.topology = self.topology
        dp.space = self.space
        dp.fibs = {d: f.copy() for d, f in self.fibs.items()}
        dp.delivery = dict(self.delivery)
        dp.down = set(self.down)
        dp._raw = dict(self._raw)
        dp._eff = {}
        return dp

    def dead_hops(self, dev: str) -> set[str]:
        out = set()
        for link in self.down:
            if dev in link:
                out |= link - {dev}
        return out

    def raw_table(self, dev: str) -> LecTable:
        return self._raw[dev]

    def lec(self, dev: str) -> LecTable:
        dead = self.dead_hops(dev)
        raw = self._raw[dev]
        if not dead:
            return raw
        hit = self._eff.get(dev)
        if hit is not None and hit[0] is raw and hit[1] == dead:
            return hit[2]
        merged: dict[ActionGroup, Predicate] = {}
        for p, a in raw.entries:
            e = a.without(dead)
            merged[e] = merged.get(e, self.space.FALSE) | p
        table = LecTable(merged, self.space)
        self._eff[dev] = (raw, dead, table)
        return table

    def action_at(self, dev: str, header: int) -> ActionGroup:
        return effective_action(self.fibs[dev].rules.values(), header).without(self.dead_hops(dev))

    def actions_over(self, dev: str, region: Predicate) -> list[tuple[Predicate, ActionGroup]]:
        return self.lec(dev).restrict(region)

    def delivers(self, dev: str, header: int) -> bool:
        return self.delivery[dev].contains(header)

    def apply_update(self, upd: FibUpdate) -> Delta:
        if upd.device not in self.fibs:
            raise DataPlaneError(f"update for unknown device {upd.device}")
        for h in upd.rule.action.hops:
            if not self.topology.has_link(upd.device, h):
                raise DataPlaneError(f"{upd.device}: next hop {h} is not a neighbor")
        table, fib, delta = apply_update(self._raw[upd.device], self.fibs[upd.device], upd)
        self._raw[upd.device] = table
        self.fibs[upd.device] = fib
        dead = self.dead_hops(upd.device)
        out = []
        for p, a, b in delta:
            a2, b2 = a.without(dead), b.without(dead)
            if a2 != b2:
                out.append((p, a2, b2))
        return out

    def link_event(self, a: str, b: str, up: bool) -> dict[str, Delta]:
        """Bring a link up or down; returns the effective delta per endpoint."""
        link = frozenset((a, b))
        if link not in self.topology.links:
            raise DataPlaneError(f"unknown link {a}-{b}")
        before = {d: self.dead_hops(d) for d in (a, b)}
        if up:
            self.down.discard(link)
        else:
            self.down.add(link)
        out = {}
        for d in sorted((a, b)):
            after = self.dead_hops(d)
            delta = []
            for p, act in self._raw[d].entries:
                x, y = act.without(before[d]), act.without(after)
                if x != y:
                    delta.append((p, x, y))
            out[d] = delta
        return out
