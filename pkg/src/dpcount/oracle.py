"""Brute-force ground truth: enumerate universes and match traces directly.

Nothing here touches automata or the product DAG.  Path expressions are
interpreted straight from the syntax tree, and every ANY choice a packet
copy can make is enumerated.

Semantics shared with the counting engine:

* a copy reaching a device whose delivery prefixes contain its dstIP is
  delivered there and goes no further;
* a copy arriving at a device it already visited terminates as a loop and
  matches nothing;
* each copy resolves an ANY group on its own, so two copies crossing the
  same device may pick different hops.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product as cartesian
from typing import Iterable

from .dataplane import DataPlane
from .pathexpr import Alt, Conj, LoopFree, Lit, Neg, PathExpr, Seq, Star, Wild
from .predicate import Predicate
from .reqlang import (
    BAnd, Behavior, Equal, Exist, Leaf, Requirement, ReqError, evaluate_behavior, space_predicate,
)

DEFAULT_BOUND = 1 << 16


class OracleRefusal(RuntimeError):
    """The instance is too large to enumerate."""


@dataclass(frozen=True, order=True)
class Trace:
    devices: tuple[str, ...]
    terminal: str  # delivered | dropped | loop

    def __str__(self) -> str:
        return "-".join(self.devices) + f" ({self.terminal})"


Universe = frozenset  # of Trace


# ------------------------------------------------------------- regex matching

def _ends(e: PathExpr, word: tuple[str, ...], i: int, memo: dict) -> frozenset:
    key = (id(e), i)
    hit = memo.get(key)
    if hit is not None:
        return hit
    n = len(word)
    if isinstance(e, Lit):
        out = frozenset({i + 1}) if i < n and word[i] == e.name else frozenset()
    elif isinstance(e, Wild):
        out = frozenset({i + 1}) if i < n else frozenset()
    elif isinstance(e, LoopFree):
        out = set()
        seen = set()
        j = i
        out.add(j)
        while j < n and word[j] not in seen:
            seen.add(word[j])
            j += 1
            out.add(j)
        out = frozenset(out)
    elif isinstance(e, Seq):
        cur = frozenset({i})
        for item in e.items:
            nxt = set()
            for j in cur:
                nxt |= _ends(item, word, j, memo)
            cur = frozenset(nxt)
        out = cur
    elif isinstance(e, Alt):
        acc = set()
        for item in e.items:
            acc |= _ends(item, word, i, memo)
        out = frozenset(acc)
    elif isinstance(e, Conj):
        acc = None
        for item in e.items:
            r = _ends(item, word, i, memo)
            acc = r if acc is None else acc & r
        out = frozenset(acc)
    elif isinstance(e, Neg):
        out = frozenset(range(i, n + 1)) - _ends(e.item, word, i, memo)
    elif isinstance(e, Star):
        reach = {i}
        frontier = [i]
        while frontier:
            j = frontier.pop()
            for k in _ends(e.item, word, j, memo):
                if k not in reach:
                    reach.add(k)
                    frontier.append(k)
        out = frozenset(reach)
    else:
        raise TypeError(f"not a path expression: {e!r}")
    memo[key] = out
    return out


def path_matches(e: PathExpr, word: Iterable[str]) -> bool:
    """Membership of a device sequence in the language of ``e``."""
    w = tuple(word)
    return len(w) in _ends(e, w, 0, {})


# ------------------------------------------------------------------ universes

def enumerate_universes(dp: DataPlane, header: int, ingress: str,
                        bound: int = DEFAULT_BOUND) -> list[Universe]:
    """Every universe of ``header`` entering at ``ingress``."""

    def explore(dev: str, path: tuple[str, ...]) -> list[list[Trace]]:
        if dev in path:
            return [[Trace(path + (dev,), "loop")]]
        here = path + (dev,)
        if dp.delivers(dev, header):
            return [[Trace(here, "delivered")]]
        act = dp.action_at(dev, header)
        if act.is_drop:
            return [[Trace(here, "dropped")]]
        branches = [explore(h, here) for h in act.hops]
        if act.kind == "ANY":
            out = [u for b in branches for u in b]
        else:
            size = 1
            for b in branches:
                size *= len(b)
            if size > bound:
                raise OracleRefusal(f"more than {bound} universes")
            out = [[t for part in combo for t in part] for combo in cartesian(*branches)]
        if len(out) > bound:
            raise OracleRefusal(f"more than {bound} universes")
        return out

    return [frozenset(u) for u in explore(ingress, ())]


def count_matches(universe: Iterable[Trace], path: PathExpr) -> int:
    return sum(1 for t in universe if t.terminal == "delivered" and path_matches(path, t.devices))


# ---------------------------------------------------------------- cell sampling

def header_cells(dp: DataPlane, region: Predicate) -> list[Predicate]:
    """Refine ``region`` by every LEC and delivery predicate of every device.

    Forwarding and delivery are constant on each returned cell.
    """
    cells = [region] if not region.is_empty() else []
    splitters: list[Predicate] = []
    for d in sorted(dp.topology.devices):
        splitters.append(dp.delivery[d])
        splitters.extend(p for p, _ in dp.lec(d).entries)
    for s in splitters:
        nxt = []
        for c in cells:
            a, b = c & s, c - s
            if not a.is_empty():
                nxt.append(a)
            if not b.is_empty():
                nxt.append(b)
        cells = nxt
    return cells


# -------------------------------------------------------------------- verdicts

@dataclass
class CellVerdict:
    cell: Predicate
    ok: bool
    witness: tuple[int, ...] | None = None


@dataclass
class IngressVerdict:
    ingress: str
    cells: list[CellVerdict]

    def violated(self, space) -> Predicate:
        out = space.FALSE
        for c in self.cells:
            if not c.ok:
                out = out | c.cell
        return out


def split_equal(behavior: Behavior) -> tuple[list[Leaf], Behavior | None]:
    """Separate top-level equal conjuncts from the counted remainder."""
    items = behavior.items if isinstance(behavior, BAnd) else (behavior,)
    eq = [i for i in items if isinstance(i, Leaf) and isinstance(i.op, Equal)]
    rest = [i for i in items if not (isinstance(i, Leaf) and isinstance(i.op, Equal))]
    if not rest:
        return eq, None
    return eq, rest[0] if len(rest) == 1 else BAnd(tuple(rest))


def simple_paths(dp: DataPlane, start: str, path: PathExpr, header: int) -> set[tuple[str, ...]]:
    """Simple topology paths from ``start`` in L(path) ending where ``header`` is delivered."""
    adj = dp.topology.adjacency()
    out = set()

    def dfs(p: tuple[str, ...]):
        if dp.delivers(p[-1], header):
            if path_matches(path, p):
                out.add(p)
            return
        for n in adj[p[-1]]:
            if n not in p:
                dfs(p + (n,))

    dfs((start,))
    return out


def oracle_verdict(req: Requirement, dp: DataPlane, bound: int = DEFAULT_BOUND) -> dict[str, IngressVerdict]:
    """Per-ingress verdict for every header cell of the packet space.

    ``req`` must already be desugared.
    """
    space = dp.space
    ps = space_predicate(req.packet_space, space)
    eq_leaves, counted = split_equal(req.behavior)
    leaves = list(counted.leaves()) if counted is not None else []
    for lf in leaves:
        if not isinstance(lf.op, Exist):
            raise ReqError("equal is only allowed as a top-level conjunct")
    cells = header_cells(dp, ps)
    out = {}
    for ing in req.ingress:
        verdicts = []
        for cell in cells:
            h = cell.pick_header()
            universes = enumerate_universes(dp, h, ing, bound)
            ok = True
            witness = None
            for eq in eq_leaves:
                target = simple_paths(dp, ing, eq.path, h)
                seen = set()
                for u in universes:
                    for t in u:
                        if t.terminal != "delivered":
                            ok = False
                        seen.add(t.devices)
                if seen != target:
                    ok = False
            if counted is not None:
                for u in sorted(universes, key=sorted):
                    vec = tuple(count_matches(u, lf.path) for lf in leaves)
                    if not evaluate_behavior(counted, vec):
                        ok = False
                        witness = vec
                        break
            verdicts.append(CellVerdict(cell, ok, witness))
        out[ing] = IngressVerdict(ing, verdicts)
    return out


def universe_counts(req: Requirement, dp: DataPlane, ingress: str, header: int,
                    bound: int = DEFAULT_BOUND) -> set[tuple[int, ...]]:
    """The set of per-universe match-count vectors (one entry per leaf)."""
    leaves = req.leaves()
    return {tuple(count_matches(u, lf.path) for lf in leaves)
            for u in enumerate_universes(dp, header, ingress, bound)}
