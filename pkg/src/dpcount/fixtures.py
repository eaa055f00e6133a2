"""Small hand-built networks used as worked examples and golden tests."""

from __future__ import annotations

from dataclasses import dataclass

from .dataplane import DataPlane, Fib, FibRule, FibUpdate, Topology, fwd_all, fwd_any
from .predicate import DEFAULT_SPACE, from_cidr
from .reqlang import Requirement, parse_one

P1 = "10.0.0.0/23"
P2 = "10.0.0.0/24"
P3 = "10.0.1.0/24"


def _rule(prio: int, dst: str, action) -> FibRule:
    return FibRule(prio, from_cidr("dst", dst), action, "-", dst)


@dataclass
class Fixture:
    name: str
    dataplane: DataPlane
    requirement: Requirement
    updates: list[FibUpdate]


def waypoint() -> Fixture:
    """Six devices, S must reach D through W on a simple path.

    A splits 10.0.0.0/24 between B and W (ANY) and sends 10.0.1.0/24 to W;
    B forwards to C.  The scripted update makes B forward to W instead.
    """
    topo = Topology.from_links([
        ("S", "A"), ("A", "B"), ("A", "W"), ("B", "W"),
        ("B", "C"), ("C", "W"), ("C", "D"), ("W", "D"),
    ])
    fibs = {
        "S": Fib([_rule(1, P1, fwd_all("A"))]),
        "A": Fib([_rule(2, P2, fwd_any("B", "W")), _rule(1, P3, fwd_all("W"))]),
        "B": Fib([_rule(1, P1, fwd_all("C"))]),
        "C": Fib([_rule(1, P1, fwd_all("D"))]),
        "W": Fib([_rule(1, P1, fwd_all("C"))]),
        "D": Fib(),
    }
    dp = DataPlane(topo, fibs, {"D": [from_cidr("dst", P1)]})
    req = parse_one(f"(dstIP in {P1}, [S], (exist >= 1, S .* W .* D) and loop_free)")
    upd = FibUpdate("modify", "B", _rule(1, P1, fwd_all("W")))
    return Fixture("waypoint", dp, req, [upd])


def universes_case(case: int) -> Fixture:
    """A multicasts to B and C; C drops.  B forwards to D (case 1) or to C or D (case 2)."""
    topo = Topology.from_links([("S", "A"), ("A", "B"), ("A", "C"), ("B", "C"), ("B", "D")])
    b_action = fwd_all("D") if case == 1 else fwd_any("C", "D")
    fibs = {
        "S": Fib([_rule(1, P1, fwd_all("A"))]),
        "A": Fib([_rule(1, P1, fwd_all("B", "C"))]),
        "B": Fib([_rule(1, P1, b_action)]),
        "C": Fib(),
        "D": Fib(),
    }
    dp = DataPlane(topo, fibs, {"D": [from_cidr("dst", P1)]})
    req = parse_one(f"(dstIP in {P1}, [S], (exist >= 1, S .* D))")
    return Fixture(f"universes-case{case}", dp, req, [])


def anycast() -> Fixture:
    """S reaches an anycast prefix served by both D and E; it must land on exactly one."""
    topo = Topology.from_links([("S", "D"), ("S", "E")])
    fibs = {"S": Fib([_rule(1, P1, fwd_any("D", "E"))]), "D": Fib(), "E": Fib()}
    dp = DataPlane(topo, fibs, {"D": [from_cidr("dst", P1)], "E": [from_cidr("dst", P1)]})
    req = parse_one(
        f"(dstIP in {P1}, [S], ((exist >= 1, S .* D) and (exist == 0, S .* E)) "
        f"or ((exist == 0, S .* D) and (exist == 1, S .* E)))")
    return Fixture("anycast", dp, req, [])


def same_destination() -> Fixture:
    """Two requirements on the same destination D counted jointly.

    S picks A or W; A multicasts to D and B; B and W forward to D.
    """
    topo = Topology.from_links([("S", "A"), ("S", "W"), ("A", "D"), ("A", "B"), ("B", "D"), ("W", "D")])
    fibs = {
        "S": Fib([_rule(1, P1, fwd_any("A", "W"))]),
        "A": Fib([_rule(1, P1, fwd_all("D", "B"))]),
        "B": Fib([_rule(1, P1, fwd_all("D"))]),
        "W": Fib([_rule(1, P1, fwd_all("D"))]),
        "D": Fib(),
    }
    dp = DataPlane(topo, fibs, {"D": [from_cidr("dst", P1)]})
    req = parse_one(
        f"(dstIP in {P1}, [S], (exist >= 2, S .* D and loop_free) "
        f"or (exist >= 1, S .* W .* D and loop_free))")
    return Fixture("same-destination", dp, req, [])


def all_fixtures() -> list[Fixture]:
    return [waypoint(), universes_case(1), universes_case(2), anycast(), same_destination()]


SPACE = DEFAULT_SPACE
