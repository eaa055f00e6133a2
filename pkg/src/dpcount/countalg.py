"""Reference counting over a plan's DAG and verdict evaluation.

Node counts are partitions of the packet space into ``(predicate,
CountSet)`` cells.  A node whose device delivers a cell counts the unit
vector of the expressions it accepts (zero if it accepts none); otherwise
the device's action decides:

* ALL: cross-sum of the contributions of every next hop;
* ANY: union of the contributions, plus the zero vector when some next hop
  has no corresponding child (the copy leaves the DAG there);
* drop: the zero vector.

The contribution of a next hop is the cross-sum over the children hosted
on that physical device (more than one only with virtual destinations),
or the zero vector when there is none.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from . import countsets as cs
from .countsets import CountSet, cross_sum, truncate, union, zero, zero_augment
from .dataplane import ActionGroup, DataPlane
from .planner import DvNode, Plan
from .predicate import Predicate
from .reqlang import evaluate_behavior

Partition = list[tuple[Predicate, CountSet]]


def node_count(action: ActionGroup, contributions: dict[str, CountSet | None], m: int,
               cap: int | None = None) -> CountSet:
    """Count of a non-delivering node for one packet class.

    ``contributions`` maps each next hop to the cross-sum of its children's
    counts, or to None when the hop has no child.
    """
    if action.is_drop:
        return zero(m)
    if action.kind == "ALL":
        out = zero(m)
        for h in action.hops:
            c = contributions.get(h)
            if c is not None:
                out = cross_sum(out, c, cap)
        return out
    out = None
    missing = False
    for h in action.hops:
        c = contributions.get(h)
        if c is None:
            missing = True
            continue
        out = c if out is None else union(out, c)
    if out is None:
        return zero(m)
    return zero_augment(out) if missing else out


def hop_groups(node: DvNode, plan: Plan) -> dict[str, list[str]]:
    """Children grouped by the physical device hosting them."""
    groups: dict[str, list[str]] = {}
    for c in node.children:
        groups.setdefault(plan.dvnet.nodes[c].phys, []).append(c)
    return groups


def contributions(groups: dict[str, list[str]], child_counts: dict[str, CountSet], m: int,
                  cap: int | None = None) -> dict[str, CountSet]:
    out = {}
    for hop, kids in groups.items():
        acc = zero(m)
        for k in kids:
            acc = cross_sum(acc, child_counts[k], cap)
        out[hop] = acc
    return out


def merge_cells(cells: Iterable[tuple[Predicate, CountSet]], space) -> Partition:
    """Union the predicates of cells carrying the same count set."""
    by_count: dict[CountSet, Predicate] = {}
    for p, c in cells:
        by_count[c] = by_count.get(c, space.FALSE) | p
    return sorted(((p, c) for c, p in by_count.items()), key=lambda pc: (sorted(pc[1]), pc[0].node))


def refine(region: Predicate, parts: list[tuple[str, Partition]]) -> list[tuple[Predicate, dict[str, CountSet]]]:
    """Split ``region`` by the partitions of several children."""
    cells = [(region, {})]
    for name, part in parts:
        nxt = []
        for p, assign in cells:
            for q, c in part:
                x = p & q
                if not x.is_empty():
                    nxt.append((x, {**assign, name: c}))
        cells = nxt
    return cells


@dataclass
class Truncation:
    cmp: str
    n: int

    def __call__(self, c: CountSet) -> CountSet:
        return truncate(c, self.cmp, self.n)


def plan_truncation(plan: Plan) -> Truncation | None:
    t = plan.tasks[0] if plan.tasks else None
    if t is not None and t.mode == "minInfo" and t.cmp is not None:
        return Truncation(*t.cmp)
    return None


def compute_node(node: DvNode, plan: Plan, dp: DataPlane, children: dict[str, Partition],
                 region: Predicate | None = None, cap: int | None = None, trunc=None) -> Partition:
    """Partition of ``region`` (default: the packet space) at one node."""
    m = plan.m
    space = dp.space
    region = plan.packet_space if region is None else region
    cells: list[tuple[Predicate, CountSet]] = []
    delivered = region & dp.delivery[node.phys]
    if not delivered.is_empty():
        cells.append((delivered, cs.unit(m, node.owners)))
    rest = region - delivered
    groups = hop_groups(node, plan)
    for p, action in dp.actions_over(node.phys, rest):
        relevant = [(c, children[c]) for h in action.hops for c in groups.get(h, ())]
        for x, assign in refine(p, relevant):
            contrib = contributions({h: groups[h] for h in action.hops if h in groups}, assign, m, cap)
            cells.append((x, node_count(action, contrib, m, cap)))
    if trunc is not None:
        cells = [(p, trunc(c)) for p, c in cells]
    return merge_cells(cells, space)


def centralized_count(plan: Plan, dp: DataPlane, cap: int | None = None,
                      truncated: bool = True) -> dict[str, Partition]:
    """Per-node partitions, computed in reverse topological order.

    With ``truncated`` (the default) a minimal-information plan keeps only
    the truncated count sets, exactly as the distributed protocol does.
    """
    trunc = plan_truncation(plan) if truncated else None
    out: dict[str, Partition] = {}
    for nid in plan.dvnet.reverse_order():
        out[nid] = compute_node(plan.dvnet.nodes[nid], plan, dp, out, cap=cap, trunc=trunc)
    return out


# ---------------------------------------------------------------- verdicts

@dataclass
class CellResult:
    pred: Predicate
    counts: CountSet
    ok: bool
    witness: tuple[int, ...] | None


def evaluate(plan: Plan, source: Partition) -> list[CellResult]:
    """Judge every cell: satisfied iff every count vector satisfies the behavior."""
    out = []
    for p, counts in source:
        witness = None
        for vec in sorted(counts):
            if not evaluate_behavior(plan.behavior, vec, plan.leaf_dims):
                witness = vec
                break
        out.append(CellResult(p, counts, witness is None, witness))
    return out


def source_partitions(plan: Plan, node_parts: dict[str, Partition]) -> dict[str, Partition]:
    """Result per ingress; an unmatched ingress counts zero everywhere."""
    out = {}
    for ing in plan.requirement.ingress:
        if ing in plan.dvnet.sources:
            out[ing] = node_parts[plan.dvnet.sources[ing]]
        elif not plan.packet_space.is_empty():
            out[ing] = [(plan.packet_space, zero(plan.m))]
        else:
            out[ing] = []
    return out


def count_verdicts(plan: Plan, node_parts: dict[str, Partition]) -> dict[str, list[CellResult]]:
    return {ing: evaluate(plan, part) for ing, part in source_partitions(plan, node_parts).items()}


# ------------------------------------------------------------- equal plans

def equal_cell_ok(node: DvNode, plan: Plan, action: ActionGroup | None) -> bool:
    """Local contract of one node for one packet class.

    ``action`` is None when the device delivers the class.
    """
    if action is None:
        return node.accepting
    hops = set(action.hops)
    want = {plan.dvnet.nodes[c].phys for c in node.children}
    return bool(want) and hops == want


def equal_node_violations(node: DvNode, plan: Plan, dp: DataPlane) -> Predicate:
    """Packets of the plan's space on which this node breaks its contract."""
    space = dp.space
    bad = space.FALSE
    ps = plan.packet_space
    delivered = ps & dp.delivery[node.phys]
    if not delivered.is_empty() and not equal_cell_ok(node, plan, None):
        bad = bad | delivered
    for p, action in dp.actions_over(node.phys, ps - delivered):
        if not equal_cell_ok(node, plan, action):
            bad = bad | p
    return bad


def equal_violations(plan: Plan, dp: DataPlane) -> dict[str, Predicate]:
    """Per node, the packets violating its local contract (empty entries dropped)."""
    out = {}
    for nid in plan.dvnet.order:
        bad = equal_node_violations(plan.dvnet.nodes[nid], plan, dp)
        if not bad.is_empty():
            out[nid] = bad
    return out


def equal_region(plan: Plan, violations: dict[str, Predicate], space) -> dict[str, Predicate]:
    """Violated packets per ingress: violations at nodes reachable from its source."""
    out = {}
    for ing in plan.requirement.ingress:
        if ing not in plan.dvnet.sources:
            out[ing] = plan.packet_space
            continue
        reach = plan.dvnet.reachable_from(plan.dvnet.sources[ing])
        bad = space.FALSE
        for nid, p in violations.items():
            if nid in reach:
                bad = bad | p
        out[ing] = bad
    return out


# -------------------------------------------------------- requirement level

def violated_regions(plans: list[Plan], dp: DataPlane) -> dict[str, Predicate]:
    """Reference verdict of a requirement: violated packets per ingress."""
    space = dp.space
    out: dict[str, Predicate] = {}
    for plan in plans:
        if plan.kind == "equal":
            regions = equal_region(plan, equal_violations(plan, dp), space)
        else:
            regions = {}
            for ing, cells in count_verdicts(plan, centralized_count(plan, dp)).items():
                bad = space.FALSE
                for c in cells:
                    if not c.ok:
                        bad = bad | c.pred
                regions[ing] = bad
        for ing, bad in regions.items():
            out[ing] = out.get(ing, space.FALSE) | bad
    return out


def naive_cross_product(plans: list[Plan], dp: DataPlane, ingress: str) -> Partition:
    """Combine independent per-expression results as if they were unrelated.

    Each plan counts one expression; the vectors of the combined result
    are all combinations of their scalar counts.
    """
    parts = []
    for i, plan in enumerate(plans):
        node_parts = centralized_count(plan, dp)
        parts.append((str(i), source_partitions(plan, node_parts)[ingress]))
    region = plans[0].packet_space
    cells = []
    for p, assign in refine(region, parts):
        vecs = {()}
        for i in range(len(plans)):
            vecs = {v + w for v in vecs for w in assign[str(i)]}
        cells.append((p, frozenset(vecs)))
    return merge_cells(cells, dp.space)
