"""Text formats for topologies, FIBs, prefix maps, latencies and event scripts.

All formats are line oriented; ``#`` starts a comment and blank lines are
ignored.

* topology: ``node NAME`` and ``link A B``
* FIB: ``device NAME`` opens a section, then
  ``rule PRIO SRC|- DST|- ALL|ANY HOP,HOP|-``
* prefix map: ``prefix DEVICE CIDR``
* latency: ``latency A B MICROSECONDS``
* events: ``at US update DEVICE rule ...``, ``at US update DEVICE delete PRIO``
  and ``at US link A B up|down``
"""

from __future__ import annotations

from pathlib import Path

from .dataplane import DROP, ActionGroup, DataPlane, Fib, FibRule, FibUpdate, Topology
from .predicate import DEFAULT_SPACE, CidrError, HeaderSpace, Predicate
from .simnet import ScriptedEvent


class FormatError(ValueError):
    def __init__(self, msg: str, line: int | None = None, source: str = "<input>"):
        self.line = line
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + msg)


def _lines(text: str):
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield no, line.split()


# ---------------------------------------------------------------- topology

def read_topology(text: str, source: str = "<topology>") -> Topology:
    topo = Topology()
    for no, tok in _lines(text):
        if tok[0] == "node" and len(tok) == 2:
            topo.add_device(tok[1])
        elif tok[0] == "link" and len(tok) == 3:
            if tok[1] == tok[2]:
                raise FormatError("self-loop link", no, source)
            topo.add_device(tok[1])
            topo.add_device(tok[2])
            topo.add_link(tok[1], tok[2])
        else:
            raise FormatError(f"expected 'node NAME' or 'link A B', got {' '.join(tok)!r}", no, source)
    return topo


def write_topology(topo: Topology) -> str:
    out = [f"node {d}" for d in sorted(topo.devices)]
    out += [f"link {a} {b}" for a, b in sorted(tuple(sorted(link)) for link in topo.links)]
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------- FIBs

def parse_rule(tok: list[str], space: HeaderSpace = DEFAULT_SPACE) -> FibRule:
    """Parse the fields after the ``rule`` keyword."""
    if len(tok) != 5:
        raise ValueError("expected 'rule PRIO SRC DST ALL|ANY HOPS'")
    prio_s, src, dst, kind, hops_s = tok
    try:
        prio = int(prio_s, 10)
    except ValueError:
        raise ValueError(f"bad priority {prio_s!r}") from None
    if kind not in ("ALL", "ANY"):
        raise ValueError(f"action must be ALL or ANY, got {kind!r}")
    match = space.TRUE
    try:
        if src != "-":
            match = match & space.from_cidr("src", src)
        if dst != "-":
            match = match & space.from_cidr("dst", dst)
    except CidrError as e:
        raise ValueError(str(e)) from None
    hops = [] if hops_s == "-" else hops_s.split(",")
    if any(not h for h in hops):
        raise ValueError(f"bad hop list {hops_s!r}")
    return FibRule(prio, match, ActionGroup.make(kind, hops), src, dst)


def format_rule(rule: FibRule) -> str:
    hops = ",".join(rule.action.hops) or "-"
    return f"rule {rule.priority} {rule.src} {rule.dst} {rule.action.kind} {hops}"


def read_fibs(text: str, space: HeaderSpace = DEFAULT_SPACE, source: str = "<fib>") -> dict[str, Fib]:
    fibs: dict[str, Fib] = {}
    cur = None
    for no, tok in _lines(text):
        if tok[0] == "device" and len(tok) == 2:
            cur = fibs.setdefault(tok[1], Fib())
        elif tok[0] == "rule":
            if cur is None:
                raise FormatError("rule outside a device section", no, source)
            try:
                cur.add(parse_rule(tok[1:], space))
            except ValueError as e:
                raise FormatError(str(e), no, source) from None
        else:
            raise FormatError(f"unknown directive {tok[0]!r}", no, source)
    return fibs


def write_fibs(fibs: dict[str, Fib]) -> str:
    out = []
    for d in sorted(fibs):
        out.append(f"device {d}")
        out += [format_rule(r) for r in fibs[d].ordered()]
    return "\n".join(out) + "\n"


# --------------------------------------------------------------- prefix map

def read_prefixes(text: str, space: HeaderSpace = DEFAULT_SPACE,
                  source: str = "<prefixes>") -> dict[str, list[Predicate]]:
    out: dict[str, list[Predicate]] = {}
    for no, tok in _lines(text):
        if tok[0] != "prefix" or len(tok) != 3:
            raise FormatError("expected 'prefix DEVICE CIDR'", no, source)
        try:
            out.setdefault(tok[1], []).append(space.from_cidr("dst", tok[2]))
        except CidrError as e:
            raise FormatError(str(e), no, source) from None
    return out


def write_prefixes(prefixes: dict[str, list[str]]) -> str:
    return "".join(f"prefix {d} {c}\n" for d in sorted(prefixes) for c in prefixes[d])


# ------------------------------------------------------------------ latency

def read_latency(text: str, source: str = "<latency>") -> dict[frozenset, float]:
    out = {}
    for no, tok in _lines(text):
        if tok[0] != "latency" or len(tok) != 4:
            raise FormatError("expected 'latency A B MICROSECONDS'", no, source)
        try:
            us = float(tok[3])
        except ValueError:
            raise FormatError(f"bad latency {tok[3]!r}", no, source) from None
        if us < 0:
            raise FormatError("latency must be non-negative", no, source)
        out[frozenset((tok[1], tok[2]))] = us
    return out


# ------------------------------------------------------------------- events

def read_events(text: str, space: HeaderSpace = DEFAULT_SPACE, source: str = "<events>") -> list[ScriptedEvent]:
    out = []
    for no, tok in _lines(text):
        try:
            if tok[0] != "at" or len(tok) < 4:
                raise ValueError("expected 'at US update ...' or 'at US link ...'")
            t = float(tok[1])
            if tok[2] == "update" and len(tok) >= 5:
                dev = tok[3]
                if tok[4] == "rule":
                    rule = parse_rule(tok[5:], space)
                    out.append(ScriptedEvent(t, "update", FibUpdate("upsert", dev, rule)))
                elif tok[4] == "delete" and len(tok) == 6:
                    rule = FibRule(int(tok[5], 10), space.FALSE, DROP)
                    out.append(ScriptedEvent(t, "update", FibUpdate("delete", dev, rule)))
                else:
                    raise ValueError("expected 'rule ...' or 'delete PRIO'")
            elif tok[2] == "link" and len(tok) == 6 and tok[5] in ("up", "down"):
                out.append(ScriptedEvent(t, "link", link=(tok[3], tok[4]), up=tok[5] == "up"))
            else:
                raise ValueError(f"bad event {' '.join(tok)!r}")
        except ValueError as e:
            raise FormatError(str(e), no, source) from None
    return out


def format_event(ev: ScriptedEvent) -> str:
    if ev.kind == "link":
        return f"at {ev.time:g} link {ev.link[0]} {ev.link[1]} {'up' if ev.up else 'down'}"
    u = ev.update
    if u.kind == "delete":
        return f"at {ev.time:g} update {u.device} delete {u.rule.priority}"
    return f"at {ev.time:g} update {u.device} {format_rule(u.rule)}"


def write_events(events: list[ScriptedEvent]) -> str:
    return "".join(format_event(e) + "\n" for e in events)


# ------------------------------------------------------------------ loading

def load_dataplane(topology: str | Path, fib: str | Path | None = None, prefixes: str | Path | None = None,
                   space: HeaderSpace = DEFAULT_SPACE) -> DataPlane:
    topo = read_topology(Path(topology).read_text(), str(topology))
    fibs = read_fibs(Path(fib).read_text(), space, str(fib)) if fib else {}
    pref = read_prefixes(Path(prefixes).read_text(), space, str(prefixes)) if prefixes else {}
    return DataPlane(topo, fibs, pref, space)
