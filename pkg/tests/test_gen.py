import random

import pytest

from dpcount.countalg import violated_regions
from dpcount.gen import (
    GenError, fattree, missing_hop_faults, random_network, random_requirement, random_updates, two_pod_clos,
)
from dpcount.planner import PlanOptions, plan_requirement
from dpcount.reqlang import ReqError, parse, render_templates


def test_fattree_k4_shape():
    net = fattree(4)
    assert len(net.topology.devices) == 20
    assert len(net.topology.links) == 32
    assert len(net.prefixes) == 8
    assert net.prefixes["t3_1"] == ["10.3.1.0/24"]
    dp = net.dataplane()
    assert all(dp.fibs[d].rules for d in dp.topology.devices)


@pytest.mark.parametrize("k", [2, 3, 5])
def test_fattree_rejects_bad_arity(k):
    with pytest.raises(GenError):
        fattree(k)


def test_clos_shape_and_shortest_paths_hold():
    net = two_pod_clos()
    assert len(net.topology.devices) == 10
    dp = net.dataplane()
    reqs = render_templates("torToTorShortest", net.fabric)
    assert len(reqs) == 12
    plans = [p for i, r in enumerate(reqs) for p in plan_requirement(r, dp, plan_id=f"r{i}")]
    assert all(v.is_empty() for v in violated_regions(plans, dp).values())


@pytest.mark.parametrize("ecmp", ["ALL", "ANY"])
def test_update_stream_applies_in_order(ecmp):
    net = fattree(4, ecmp)
    dp = net.dataplane()
    ups = random_updates(net, 300, seed=7)
    assert len(ups) == 300
    kinds = {u.kind for u in ups}
    assert kinds == {"insert", "delete", "modify"}
    for u in ups:
        dp.apply_update(u)
    assert random_updates(net, 300, seed=7) == ups


def test_missing_hop_faults_each_remove_one_hop():
    net = two_pod_clos()
    faults = missing_hop_faults(net)
    assert len(faults) == 64
    for f in faults:
        old = net.fibs[f.device].rules[f.rule.priority]
        assert set(f.rule.action.hops) < set(old.action.hops)
        assert len(old.action.hops) - len(f.rule.action.hops) == 1


def test_network_write(tmp_path):
    net = two_pod_clos()
    net.write(tmp_path)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert {"topology.txt", "fib.txt", "prefixes.txt"} <= set(names)
    for kind in ("torToTorShortest", "torToTorEcmp", "failureEcmp"):
        assert parse((tmp_path / f"req_{kind}.txt").read_text()) == render_templates(kind, net.fabric)


def test_random_instances_plan():
    ok = 0
    for seed in range(100):
        rng = random.Random(seed)
        dp = random_network(rng)
        assert 2 <= len(dp.topology.devices) <= 8
        try:
            plan_requirement(random_requirement(rng, dp, "count"), dp, PlanOptions(allow_unmatched=True))
            ok += 1
        except ReqError:
            pass
    assert ok >= 60
