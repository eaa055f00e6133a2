import random

import pytest

from dpcount.dataplane import DataPlane, Fib, FibRule, Topology, fwd_all, fwd_any
from dpcount.fixtures import P1, P2, P3, anycast, same_destination, universes_case, waypoint
from dpcount.gen import random_network
from dpcount.oracle import (
    OracleRefusal, Trace, count_matches, enumerate_universes, header_cells, oracle_verdict, path_matches,
)
from dpcount.predicate import from_cidr
from dpcount.reqlang import desugar, parse_path

H = from_cidr("dst", P2).pick_header()


def _universes(fx, header=H):
    return {frozenset(str(t) for t in u) for u in enumerate_universes(fx.dataplane, header, "S")}


def test_case1_one_universe_of_two_traces():
    assert _universes(universes_case(1)) == {frozenset({"S-A-B-D (delivered)", "S-A-C (dropped)"})}


def test_case2_two_universes_of_two_traces():
    assert _universes(universes_case(2)) == {
        frozenset({"S-A-B-C (dropped)", "S-A-C (dropped)"}),
        frozenset({"S-A-B-D (delivered)", "S-A-C (dropped)"}),
    }


def test_all_drop_network():
    dp = DataPlane(Topology.from_links([("S", "A")]))
    assert enumerate_universes(dp, H, "S") == [frozenset({Trace(("S",), "dropped")})]


def test_loop_terminates_trace():
    topo = Topology.from_links([("S", "A"), ("A", "B"), ("B", "S")])
    r = lambda a: Fib([FibRule(1, from_cidr("dst", P1), a)])  # noqa: E731
    dp = DataPlane(topo, {"S": r(fwd_all("A")), "A": r(fwd_all("B")), "B": r(fwd_all("S"))})
    [u] = enumerate_universes(dp, H, "S")
    assert u == {Trace(("S", "A", "B", "S"), "loop")}
    assert count_matches(u, parse_path(".*")) == 0


def test_count_matches():
    u = {Trace(("S", "A", "C"), "dropped")}
    assert count_matches(u, parse_path("S .* D")) == 0
    fx = waypoint()
    # A picks B: S-A-B-C-D, no W on the path
    universes = enumerate_universes(fx.dataplane, H, "S")
    counts = sorted(count_matches(u, parse_path("S .* W .* D")) for u in universes)
    assert counts == [0, 1]


def test_universe_count_is_product_of_any_choices():
    topo = Topology.from_links([("S", "A"), ("S", "B"), ("A", "C"), ("A", "D"), ("B", "D"), ("C", "E")])
    r = lambda a: Fib([FibRule(1, from_cidr("dst", P1), a)])  # noqa: E731
    dp = DataPlane(topo, {"S": r(fwd_all("A", "B")), "A": r(fwd_any("C", "D")), "B": r(fwd_any("D")),
                          "C": r(fwd_any("E"))}, {"D": [from_cidr("dst", P1)], "E": [from_cidr("dst", P1)]})
    assert len(enumerate_universes(dp, H, "S")) == 2 * 1 * 1


def test_refusal_beyond_bound():
    fx = universes_case(2)
    with pytest.raises(OracleRefusal):
        enumerate_universes(fx.dataplane, H, "S", bound=1)


def test_headers_in_one_cell_behave_alike():
    """Spot check: three members of every forwarding cell see the same universes."""
    rng = random.Random(3)
    for seed in range(30):
        dp = random_network(random.Random(seed))
        sp = dp.space
        ing = sorted(dp.topology.devices)[0]
        for cell in header_cells(dp, sp.TRUE):
            hs = {cell.pick_header()}
            for _ in range(200):
                if len(hs) == 3:
                    break
                lits = {v: rng.random() < 0.5 for v in rng.sample(range(2 * sp.bits), rng.randint(1, 6))}
                sub = cell & sp.pred(sp.store.cube(lits))
                if not sub.is_empty():
                    hs.add(sub.pick_header())
            assert len(hs) == 3
            ref = enumerate_universes(dp, hs.pop(), ing)
            for h in hs:
                assert enumerate_universes(dp, h, ing) == ref


def test_waypoint_verdict():
    fx = waypoint()
    v = oracle_verdict(desugar(fx.requirement, fx.dataplane.topology.devices), fx.dataplane)["S"]
    assert v.violated(fx.dataplane.space) == from_cidr("dst", P2)
    assert any(c.ok and c.cell == from_cidr("dst", P3) for c in v.cells)
    assert [c.witness for c in v.cells if not c.ok] == [(0,)]


@pytest.mark.parametrize("make", [anycast, same_destination])
def test_satisfied_fixtures(make):
    fx = make()
    v = oracle_verdict(desugar(fx.requirement, fx.dataplane.topology.devices), fx.dataplane)["S"]
    assert v.violated(fx.dataplane.space).is_empty()


def test_path_matches_basics():
    assert path_matches(parse_path("S .* W .* D"), "SAWD")
    assert not path_matches(parse_path("S .* W .* D"), "SAD")
    assert path_matches(parse_path("not (S .*)"), "AS")
    assert path_matches(parse_path("(A | B)* and . ."), "AB")
