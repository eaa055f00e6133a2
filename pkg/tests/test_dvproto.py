import random

import pytest

from dpcount.countalg import centralized_count
from dpcount.countsets import zero
from dpcount.dvproto import DeviceVerifier, ProtocolError, UpdateMessage
from dpcount.fixtures import P1, P2, P3, waypoint
from dpcount.gen import random_network, random_requirement
from dpcount.planner import PlanOptions, plan_requirement
from dpcount.predicate import from_cidr
from dpcount.reqlang import ReqError
from dpcount.simnet import Simulator

ONE = frozenset({(1,)})


def _msg(withdrawn, incoming, version=1):
    return UpdateMessage("p0", version, "A1", "B1", withdrawn, incoming)


def test_message_invariants():
    _msg([from_cidr("dst", P1)], [(from_cidr("dst", P2), ONE), (from_cidr("dst", P3), zero(1))]).check()
    with pytest.raises(ProtocolError):
        _msg([], []).check()
    with pytest.raises(ProtocolError):
        _msg([from_cidr("dst", P1)], [(from_cidr("dst", P1), ONE), (from_cidr("dst", P2), ONE)]).check()
    with pytest.raises(ProtocolError):
        _msg([from_cidr("dst", P1)], [(from_cidr("dst", P2), ONE)]).check()


def test_message_text_and_size():
    p = from_cidr("dst", P2)
    m = _msg([p], [(p, frozenset({(0,), (1,)}))])
    assert m.text() == f"UPD A1 B1 W:[{p.node}] I:[({p.node},{{0,1}})]"
    assert m.size_proxy() == 2 * p.size_nodes() * 16 + 8 * 2


def _plan_and_verifiers():
    fx = waypoint()
    [plan] = plan_requirement(fx.requirement, fx.dataplane)
    return fx, plan, {d: DeviceVerifier(d, fx.dataplane, [plan]) for d in fx.dataplane.topology.devices}


def test_stale_version_is_dropped():
    fx, plan, vs = _plan_and_verifiers()
    a = vs["A"]
    a.start()
    before = a.snapshot()
    msg = UpdateMessage(plan.plan_id, plan.version + 1, "A1", "B1", [plan.packet_space], [(plan.packet_space, ONE)])
    a.handle_update(msg)
    assert a.snapshot() == before and a.received == 0


def test_unknown_link_rejected():
    fx, plan, vs = _plan_and_verifiers()
    msg = UpdateMessage(plan.plan_id, plan.version, "A1", "D1", [plan.packet_space], [(plan.packet_space, ONE)])
    with pytest.raises(ProtocolError):
        vs["A"].handle_update(msg)


def test_flush_sends_only_changes():
    fx, plan, vs = _plan_and_verifiers()
    b = vs["B"]
    b.start()
    # B1 counts zero everywhere, which the parent already assumes
    assert [m for m in b.flush() if m.down == "B1"] == []
    d = vs["D"]
    d.start()
    msgs = d.flush()
    edges = set(plan.dvnet.edges())
    assert sorted(m.up for m in msgs) == ["C2", "W1", "W2", "W3"]
    for m in msgs:
        assert (m.up, m.down) in edges
        m.check()
    assert d.flush() == []


def test_hand_driven_exchange_reaches_centralized_counts():
    fx, plan, vs = _plan_and_verifiers()
    host = {nid: n.phys for nid, n in plan.dvnet.nodes.items()}
    queue = []
    for v in vs.values():
        v.start()
    for d in sorted(vs):
        queue += vs[d].flush()
    while queue:
        m = queue.pop(0)
        v = vs[host[m.up]]
        v.handle_update(m)
        queue += v.flush()
    want = centralized_count(plan, fx.dataplane)
    for nid, node in plan.dvnet.nodes.items():
        assert vs[node.phys].result(plan.plan_id, nid) == want[nid]
    for v in vs.values():
        v.check_invariants()


def test_invariants_hold_after_random_runs():
    checked = 0
    for seed in range(60):
        rng = random.Random(seed)
        dp = random_network(rng)
        req = random_requirement(rng, dp, "count")
        try:
            plans = plan_requirement(req, dp, PlanOptions(allow_unmatched=True))
        except ReqError:
            continue
        sim = Simulator(dp, plans, seed=seed)
        sim.burst()
        sim.check_invariants()
        checked += 1
    assert checked >= 30
