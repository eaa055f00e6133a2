"""Command-line entry point.

Exit codes: 0 satisfied / ok, 1 some requirement violated, 2 usage,
validation or scale error, 3 internal trap (non-convergence, protocol
invariant broken, disagreement with the oracle).
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

from .countalg import (
    centralized_count, count_verdicts, equal_region, equal_violations, evaluate, source_partitions,
)
from .dataplane import DataPlane, DataPlaneError
from .dvproto import ProtocolError
from .formats import FormatError, load_dataplane, read_events, read_latency, write_events
from .gen import GenError, fattree, random_updates, two_pod_clos, update_events
from .oracle import OracleRefusal, oracle_verdict
from .planner import Plan, PlanError, PlanOptions, plan_requirement
from .predicate import Predicate
from .reqlang import ReqError, Requirement, desugar, parse
from .simnet import CSV_HEADER, EventBudgetExceeded, RunStats, Simulator

EXIT_OK, EXIT_VIOLATED, EXIT_USAGE, EXIT_TRAP = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class Row:
    requirement: int
    ingress: str
    pred: Predicate
    status: str  # satisfied | violated
    witness: str

    def fields(self) -> list:
        return [self.requirement, self.ingress, self.pred.describe(), self.status, self.witness]

    def text(self) -> str:
        w = f" witness={self.witness}" if self.witness != "-" else ""
        return f"r{self.requirement} {self.ingress} {self.status:9} {self.pred.describe()}{w}"


REPORT_HEADER = ["requirement", "ingress", "predicate", "status", "witness"]


def _vec(v) -> str:
    return "(" + ",".join(map(str, v)) + ")" if v is not None else "-"


# --------------------------------------------------------------- loading

def _need(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise UsageError(f"--{n.replace('_', '-')} is required")
        if not Path(getattr(args, n)).is_file():
            raise UsageError(f"{getattr(args, n)}: no such file")


def _load(args) -> tuple[DataPlane, list[Requirement]]:
    _need(args, "topology", "requirements")
    for n in ("fib", "prefixes"):
        if getattr(args, n) is not None:
            _need(args, n)
    dp = load_dataplane(args.topology, args.fib, args.prefixes)
    reqs = parse(Path(args.requirements).read_text())
    return dp, reqs


def _plans(args, dp: DataPlane, reqs: list[Requirement]) -> list[list[Plan]]:
    opts = PlanOptions(min_info=args.min_info, allow_unmatched=getattr(args, "allow_unmatched", False))
    return [plan_requirement(r, dp, opts, plan_id=f"r{i}") for i, r in enumerate(reqs)]


# ------------------------------------------------------------- reporting

def _rows_centralized(i: int, plans: list[Plan], dp: DataPlane) -> list[Row]:
    rows = []
    for plan in plans:
        if plan.kind == "equal":
            for ing, bad in equal_region(plan, equal_violations(plan, dp), dp.space).items():
                rows += _equal_rows(i, ing, plan.packet_space, bad)
        else:
            for ing, cells in count_verdicts(plan, centralized_count(plan, dp)).items():
                rows += [Row(i, ing, c.pred, "satisfied" if c.ok else "violated", _vec(c.witness)) for c in cells]
    return rows


def _equal_rows(i: int, ing: str, ps: Predicate, bad: Predicate) -> list[Row]:
    rows = []
    if not bad.is_empty():
        rows.append(Row(i, ing, bad, "violated", "equal"))
    if not (ps - bad).is_empty():
        rows.append(Row(i, ing, ps - bad, "satisfied", "-"))
    return rows


def _rows_simulated(i: int, plans: list[Plan], sim: Simulator) -> list[Row]:
    rows = []
    for plan in plans:
        if plan.kind == "equal":
            viol = {nid: p for v in sim.verifiers.values() for pid, nid, p in v.equal_local_check()
                    if pid == plan.plan_id}
            for ing, bad in equal_region(plan, viol, sim.dp.space).items():
                rows += _equal_rows(i, ing, plan.packet_space, bad)
        else:
            parts = source_partitions(plan, sim.node_results(plan))
            for ing, part in parts.items():
                rows += [Row(i, ing, c.pred, "satisfied" if c.ok else "violated", _vec(c.witness))
                         for c in evaluate(plan, part)]
    return rows


def _rows_oracle(i: int, req: Requirement, dp: DataPlane) -> list[Row]:
    rows = []
    for ing, verdict in oracle_verdict(desugar(req, dp.topology.devices), dp).items():
        rows += [Row(i, ing, c.cell, "satisfied" if c.ok else "violated", _vec(c.witness)) for c in verdict.cells]
    return rows


def _violated(rows: list[Row], space) -> dict[tuple[int, str], Predicate]:
    out: dict[tuple[int, str], Predicate] = {}
    for r in rows:
        key = (r.requirement, r.ingress)
        out.setdefault(key, space.FALSE)
        if r.status == "violated":
            out[key] = out[key] | r.pred
    return out


def _emit(rows: list[Row], out: Path | None, name: str = "verdicts.csv") -> None:
    rows = sorted(rows, key=lambda r: (r.requirement, r.ingress, r.pred.describe()))
    for r in rows:
        print(r.text())
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / name, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(REPORT_HEADER)
            w.writerows(r.fields() for r in rows)


def _write_stats(stats: list[RunStats], out: Path | None) -> None:
    text = CSV_HEADER + "\n" + "".join(s.row() + "\n" for s in stats)
    if out is None:
        sys.stdout.write(text)
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / "stats.csv").write_text(text)


# -------------------------------------------------------------- commands

def cmd_plan(args) -> int:
    dp, reqs = _load(args)
    out = Path(args.out) if args.out else None
    for plans in _plans(args, dp, reqs):
        for plan in plans:
            text = plan.serialize()
            if out is None:
                sys.stdout.write(text)
                continue
            out.mkdir(parents=True, exist_ok=True)
            (out / f"plan_{plan.plan_id}.txt").write_text(text)
            (out / f"plan_{plan.plan_id}.dot").write_text(plan.dvnet.to_dot(plan.plan_id))
            print(f"{plan.plan_id}: {plan.kind}, {len(plan.dvnet.nodes)} nodes, {len(plan.tasks)} tasks")
    return EXIT_OK


def _replay(args, dp: DataPlane) -> None:
    """Apply the event script directly to the data plane (no protocol run)."""
    if not args.events:
        return
    for ev in sorted(read_events(Path(args.events).read_text(), dp.space, args.events), key=lambda e: e.time):
        if ev.kind == "update":
            dp.apply_update(ev.update)
        else:
            dp.link_event(ev.link[0], ev.link[1], ev.up)


def cmd_verify(args) -> int:
    mode = args.mode
    dp, reqs = _load(args)
    out = Path(args.out) if args.out else None
    if mode == "oracle":
        _replay(args, dp)
        rows = [r for i, req in enumerate(reqs) for r in _rows_oracle(i, req, dp)]
        _emit(rows, out)
        return EXIT_VIOLATED if any(r.status == "violated" for r in rows) else EXIT_OK
    plan_sets = _plans(args, dp, reqs)
    stats: list[RunStats] = []
    if mode == "simulate":
        latency = read_latency(Path(args.latency).read_text(), args.latency) if args.latency else {}
        events = read_events(Path(args.events).read_text(), dp.space, args.events) if args.events else []
        all_plans = [p for ps in plan_sets for p in ps]
        sim = Simulator(dp, all_plans, latency, dampening=args.dampening, seed=args.seed)
        stats.append(sim.burst())
        stats += sim.incremental(events)
        sim.check_invariants()
        rows = [r for i, ps in enumerate(plan_sets) for r in _rows_simulated(i, ps, sim)]
    else:
        _replay(args, dp)
        rows = [r for i, ps in enumerate(plan_sets) for r in _rows_centralized(i, ps, dp)]
    _emit(rows, out)
    if stats:
        _write_stats(stats, out)
    if args.check_against_oracle:
        expect = [r for i, req in enumerate(reqs) for r in _rows_oracle(i, req, dp)]
        if _violated(expect, dp.space) != _violated(rows, dp.space):
            print("MISMATCH: verdict differs from the oracle", file=sys.stderr)
            return EXIT_TRAP
        print("oracle agrees")
    return EXIT_VIOLATED if any(r.status == "violated" for r in rows) else EXIT_OK


def cmd_gen(args) -> int:
    if args.kind == "fattree":
        net = fattree(args.k, args.ecmp)
    else:
        net = two_pod_clos(args.ecmp)
    out = Path(args.out)
    for p in net.write(out):
        print(p)
    if args.updates:
        evs = update_events(random_updates(net, args.updates, args.seed if args.seed is not None else 0))
        (out / "events.txt").write_text(write_events(evs))
        print(out / "events.txt")
    return EXIT_OK


# ----------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--topology", help="topology file (node/link lines)")
    p.add_argument("--fib", help="FIB file (device/rule lines)")
    p.add_argument("--prefixes", help="prefix map (prefix DEVICE CIDR)")
    p.add_argument("--requirements", help="requirement file")
    p.add_argument("--min-info", action="store_true", help="propagate minimal counting information")
    p.add_argument("--allow-unmatched", action="store_true",
                   help="treat an ingress without any valid path as counting zero")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dpcount", description="Distributed data plane verification by counting.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="compile requirements into plans (text + DOT)")
    _common(p)
    p.set_defaults(func=cmd_plan)

    for name, default in (("verify", "centralized"), ("simulate", "simulate"), ("oracle", "oracle")):
        p = sub.add_parser(name, help=f"verify requirements ({default} by default)")
        _common(p)
        p.add_argument("--mode", choices=("centralized", "simulate", "oracle"), default=default)
        p.add_argument("--latency", help="latency file (latency A B US)")
        p.add_argument("--events", help="event script (at US update|link ...)")
        p.add_argument("--seed", type=int, help="perturb link latencies with this seed")
        p.add_argument("--dampening", action="store_true", help="batch pending events before announcing")
        p.add_argument("--check-against-oracle", action="store_true",
                       help="cross-check the verdict against brute-force enumeration")
        p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen", help="generate a fabric, its FIBs and requirement templates")
    p.add_argument("kind", choices=("fattree", "clos"))
    p.add_argument("--k", type=int, default=4, help="fat-tree arity (even, >= 4)")
    p.add_argument("--ecmp", choices=("ALL", "ANY"), default="ALL")
    p.add_argument("--updates", type=int, default=0, help="also write this many random updates")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, FormatError, ReqError, PlanError, DataPlaneError, GenError, OracleRefusal) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (EventBudgetExceeded, ProtocolError) as e:
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_TRAP


if __name__ == "__main__":
    sys.exit(main())
