import random

import pytest

from dpcount.dataplane import (
    DROP, ActionGroup, DataPlane, DataPlaneError, Fib, FibRule, FibUpdate, Topology,
    apply_update, build_lec_table, effective_action, fwd_all, fwd_any,
)
from dpcount.predicate import TRUE, HeaderSpace, from_cidr

SMALL = HeaderSpace(6)
HOPS = ["B", "C", "D", "E"]


def rand_rule(rng, prio):
    field = rng.choice(["src", "dst"])
    match = SMALL.from_prefix(field, rng.randrange(64), rng.randint(0, 6))
    if rng.random() < 0.3:
        match = match & SMALL.from_prefix("dst", rng.randrange(64), rng.randint(0, 4))
    hops = rng.sample(HOPS, rng.randint(0, 3))
    return FibRule(prio, match, ActionGroup.make(rng.choice(["ALL", "ANY"]), hops))


def rand_fib(rng, n=8):
    prios = rng.sample(range(100), n)
    return Fib(rand_rule(rng, p) for p in prios)


def test_action_canonical():
    assert fwd_any("B") == fwd_all("B")
    assert fwd_any() == DROP
    assert fwd_all("C", "B", "C").hops == ("B", "C")
    assert DROP.is_drop
    assert str(fwd_any("W", "B")) == "ANY{B,W}"


def test_effective_action_basics():
    assert effective_action([], 0) == DROP
    rules = [FibRule(5, TRUE, fwd_all("B")), FibRule(10, TRUE, fwd_all("C"))]
    assert effective_action(rules, 12345) == fwd_all("C")


def test_effective_action_matches_lec_on_random_fibs():
    rng = random.Random(3)
    for _ in range(30):
        fib = rand_fib(rng)
        table = build_lec_table(fib, SMALL)
        table.check()
        actions = [a for _, a in table.entries]
        assert len(actions) == len(set(actions))
        for h in range(1 << SMALL.width):
            assert table.lookup(h) == effective_action(fib.rules.values(), h)


def test_lec_small_cases():
    assert build_lec_table([], SMALL).entries == [(SMALL.TRUE, DROP)]
    p = from_cidr("dst", "10.0.0.0/24")
    t = build_lec_table([FibRule(1, p, fwd_all("B"))])
    assert dict((a, q) for q, a in t.entries) == {fwd_all("B"): p, DROP: ~p}


def test_lec_workflow_device_a():
    p1, p2, p3 = (from_cidr("dst", c) for c in ("10.0.0.0/23", "10.0.0.0/24", "10.0.1.0/24"))
    t = build_lec_table([FibRule(2, p2, fwd_any("B", "W")), FibRule(1, p3, fwd_all("W"))])
    assert dict((a, q) for q, a in t.entries) == {fwd_any("B", "W"): p2, fwd_all("W"): p3, DROP: ~p1}


def test_workflow_update_delta():
    p1 = from_cidr("dst", "10.0.0.0/23")
    fib = Fib([FibRule(1, p1, fwd_all("C"))])
    table = build_lec_table(fib)
    _, _, delta = apply_update(table, fib, FibUpdate("modify", "B", FibRule(1, p1, fwd_all("W"))))
    assert delta == [(p1, fwd_all("C"), fwd_all("W"))]


def test_identical_modify_is_noop():
    p1 = from_cidr("dst", "10.0.0.0/23")
    fib = Fib([FibRule(1, p1, fwd_all("C"))])
    table = build_lec_table(fib)
    t2, _, delta = apply_update(table, fib, FibUpdate("modify", "B", FibRule(1, p1, fwd_all("C"))))
    assert delta == [] and t2 == table


def test_update_errors():
    fib = Fib([FibRule(1, TRUE, fwd_all("C"))])
    table = build_lec_table(fib)
    with pytest.raises(DataPlaneError):
        apply_update(table, fib, FibUpdate("delete", "B", FibRule(7, TRUE, DROP)))
    with pytest.raises(DataPlaneError):
        apply_update(table, fib, FibUpdate("insert", "B", FibRule(1, TRUE, DROP)))
    with pytest.raises(DataPlaneError):
        Fib([FibRule(1, TRUE, DROP), FibRule(1, TRUE, fwd_all("B"))])


def test_incremental_equals_rebuild_1000_updates():
    rng = random.Random(5)
    done = 0
    while done < 1000:
        fib = rand_fib(rng, rng.randint(0, 8))
        table = build_lec_table(fib, SMALL)
        for _ in range(20):
            kind = rng.choice(["insert", "delete", "modify"]) if fib.rules else "insert"
            if kind == "insert":
                prio = rng.choice([p for p in range(120) if p not in fib.rules])
                rule = rand_rule(rng, prio)
            else:
                prio = rng.choice(sorted(fib.rules))
                rule = rand_rule(rng, prio) if kind == "modify" else fib.rules[prio]
            old_table = table
            table, fib, delta = apply_update(table, fib, FibUpdate(kind, "X", rule))
            assert table == build_lec_table(fib, SMALL)
            table.check()
            changed = SMALL.FALSE
            for p, a, b in delta:
                assert a != b
                assert not p.overlaps(changed)
                changed = changed | p
            for h in rng.sample(range(1 << SMALL.width), 64):
                before, after = old_table.lookup(h), table.lookup(h)
                assert changed.contains(h) == (before != after)
                for p, a, b in delta:
                    if p.contains(h):
                        assert (a, b) == (before, after)
            done += 1


def small_dp():
    topo = Topology.from_links([("A", "B"), ("A", "C"), ("A", "D")])
    fibs = {"A": Fib([
        FibRule(3, SMALL.from_prefix("dst", 0, 1), fwd_all("C")),
        FibRule(2, SMALL.from_prefix("dst", 32, 1), fwd_any("B", "C")),
    ])}
    return DataPlane(topo, fibs, space=SMALL)


def test_link_events():
    dp = small_dp()
    original = dp.lec("A")
    assert dp.link_event("A", "D", False) == {"A": [], "D": []}
    dp.link_event("A", "D", True)
    delta = dp.link_event("A", "C", False)["A"]
    got = {(a, b) for _, a, b in delta}
    assert got == {(fwd_all("C"), DROP), (fwd_any("B", "C"), fwd_all("B"))}
    assert dp.lec("A").lookup(0) == DROP
    dp.link_event("A", "C", True)
    assert dp.lec("A") == original
    with pytest.raises(DataPlaneError):
        dp.link_event("B", "C", False)


def test_update_rejects_non_neighbor_hop():
    dp = small_dp()
    with pytest.raises(DataPlaneError):
        dp.apply_update(FibUpdate("insert", "A", FibRule(9, TRUE, fwd_all("Z"))))
