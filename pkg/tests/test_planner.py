import random

import pytest

from dpcount.fixtures import anycast, same_destination, waypoint
from dpcount.gen import random_network, random_requirement, two_pod_clos
from dpcount.oracle import path_matches
from dpcount.planner import IngressUnmatched, PlanOptions, plan_requirement, strip_loop_free
from dpcount.predicate import from_cidr
from dpcount.reqlang import PrefixMismatch, ReqError, ValidationError, desugar, parse_one


def test_waypoint_dvnet_labels_and_shape():
    fx = waypoint()
    [plan] = plan_requirement(fx.requirement, fx.dataplane)
    net = plan.dvnet
    assert sorted(net.nodes) == ["A1", "B1", "B2", "C1", "C2", "D1", "S1", "W1", "W2", "W3"]
    assert net.sources == {"S": "S1"}
    assert net.accepting == {"D1"}
    assert set(net.edges()) == {
        ("S1", "A1"), ("A1", "B1"), ("A1", "W1"), ("B1", "C1"), ("B1", "W2"), ("W1", "B2"), ("W1", "C2"),
        ("W1", "D1"), ("B2", "C2"), ("C1", "W3"), ("W2", "C2"), ("W2", "D1"), ("C2", "D1"), ("W3", "D1"),
    }
    assert len(plan.tasks) == 10
    assert all(t.mode == "fullCount" for t in plan.tasks)


def test_plans_are_deterministic():
    a = [p.serialize() for p in plan_requirement(waypoint().requirement, waypoint().dataplane)]
    b = [p.serialize() for p in plan_requirement(waypoint().requirement, waypoint().dataplane)]
    assert a == b
    dot_a = plan_requirement(waypoint().requirement, waypoint().dataplane)[0].dvnet.to_dot()
    dot_b = plan_requirement(waypoint().requirement, waypoint().dataplane)[0].dvnet.to_dot()
    assert dot_a == dot_b


def _simple_paths(dp, start, expr, stop_at):
    adj = dp.topology.adjacency()
    out = set()

    def dfs(p):
        if path_matches(expr, p):
            out.add(p)
        if p[-1] in stop_at and len(p) > 0:
            return
        for n in adj[p[-1]]:
            if n not in p:
                dfs(p + (n,))

    dfs((start,))
    return out


def test_dvnet_paths_are_exactly_the_valid_simple_paths():
    checked = 0
    for seed in range(400):
        rng = random.Random(seed)
        dp = random_network(rng)
        req = random_requirement(rng, dp, "scalar")
        try:
            [plan] = plan_requirement(req, dp, PlanOptions(allow_unmatched=True))
        except ReqError:
            continue
        expr = strip_loop_free(desugar(req, dp.topology.devices).behavior.path, dp.topology.devices)
        full = {d for d, p in dp.delivery.items() if plan.packet_space.issubset(p)}
        for ing in req.ingress:
            want = _simple_paths(dp, ing, expr, full)
            got = set(plan.dvnet.paths(plan.dvnet.sources[ing])) if ing in plan.dvnet.sources else set()
            assert got == want, (seed, str(req))
        # every node reaches an accepting node
        for nid in plan.dvnet.nodes:
            assert plan.dvnet.reachable_from(nid) & plan.dvnet.accepting
        checked += 1
    assert checked >= 150


def test_merge_flag_only_shrinks_the_dag():
    for seed in range(100):
        rng = random.Random(seed)
        dp = random_network(rng)
        req = random_requirement(rng, dp, "scalar")
        try:
            [merged] = plan_requirement(req, dp, PlanOptions(allow_unmatched=True))
            [flat] = plan_requirement(req, dp, PlanOptions(allow_unmatched=True, merge=False))
        except ReqError:
            continue
        assert len(merged.dvnet.nodes) <= len(flat.dvnet.nodes)
        for ing, src in merged.dvnet.sources.items():
            assert sorted(merged.dvnet.paths(src)) == sorted(flat.dvnet.paths(flat.dvnet.sources[ing]))


def test_anycast_uses_one_union_dag():
    fx = anycast()
    [plan] = plan_requirement(fx.requirement, fx.dataplane)
    assert plan.m == 2
    owners = {n.dev: n.owners for n in plan.dvnet.nodes.values() if n.accepting}
    assert owners == {"D": frozenset({0}), "E": frozenset({1})}


def test_same_destination_uses_virtual_destinations():
    fx = same_destination()
    [plan] = plan_requirement(fx.requirement, fx.dataplane)
    assert plan.m == 2
    virt = plan.topology.virtual_of
    assert set(virt.values()) == {"D"} and len(virt) == 2
    acc = [n for n in plan.dvnet.nodes.values() if n.accepting]
    assert {n.phys for n in acc} == {"D"}
    assert all(len(n.owners) == 1 for n in acc)


def test_unmatched_ingress():
    fx = waypoint()
    req = parse_one("(dstIP in 10.0.0.0/23, [S, D], (exist >= 1, S .* W .* D))")
    with pytest.raises(IngressUnmatched):
        plan_requirement(req, fx.dataplane)
    [plan] = plan_requirement(req, fx.dataplane, PlanOptions(allow_unmatched=True))
    assert plan.unmatched == ["D"]


def test_min_info_only_for_single_scalar_leaf():
    fx = waypoint()
    [plan] = plan_requirement(fx.requirement, fx.dataplane, PlanOptions(min_info=True))
    assert {t.mode for t in plan.tasks} == {"minInfo"}
    assert plan.tasks[0].cmp == (">=", 1)
    fx = anycast()
    [plan] = plan_requirement(fx.requirement, fx.dataplane, PlanOptions(min_info=True))
    assert {t.mode for t in plan.tasks} == {"fullCount"}


def test_equal_plan_on_clos_and_partial_delivery_rejected():
    net = two_pod_clos()
    dp = net.dataplane()
    req = parse_one("(srcIP in 10.0.0.0/24 and dstIP in 10.1.0.0/24, [t0_0], (equal, t0_0 . . . t1_0))")
    [plan] = plan_requirement(req, dp)
    assert plan.kind == "equal"
    assert {t.mode for t in plan.tasks} == {"equalLocal"}
    assert all(not t.downstream and not t.upstream for t in plan.tasks)
    # 2 x 2 x 2 shortest paths t0_0 - a0_x - s_y - a1_z - t1_0
    assert len(plan.dvnet.paths(plan.dvnet.sources["t0_0"])) == 8
    wide = parse_one("(dstIP in 10.1.0.0/23, [t0_0], (equal, t0_0 . . . t1_0))")
    with pytest.raises(PrefixMismatch):
        plan_requirement(wide, dp)


def test_equal_below_or_rejected():
    fx = waypoint()
    req = parse_one("(dstIP in 10.0.0.0/23, [S], (equal, S .* D) or (exist >= 1, S .* D))")
    with pytest.raises(ValidationError):
        plan_requirement(req, fx.dataplane)


def test_empty_packet_space():
    fx = waypoint()
    req = parse_one("(dstIP in 10.0.0.0/24 and dstIP in 10.0.1.0/24, [S], (exist >= 1, S .* D))")
    [plan] = plan_requirement(req, fx.dataplane)
    assert plan.packet_space.is_empty()


def test_prefix_mismatch_from_planner():
    fx = waypoint()
    fx.dataplane.delivery["D"] = from_cidr("dst", "10.0.0.0/24")
    with pytest.raises(PrefixMismatch):
        plan_requirement(fx.requirement, fx.dataplane)
