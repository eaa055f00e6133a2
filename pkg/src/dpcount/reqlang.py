"""Requirement language: lexer, parser, printer, desugaring and validation.

A requirement is written as ``(packet_space, [ingress, ...], behavior)``::

    (dstIP in 10.0.0.0/23, [S], (exist >= 1, S .* W .* D) and loop_free)

Packet spaces combine ``srcIP``/``dstIP`` CIDR atoms (``in`` and ``=`` are
synonyms) with ``and``/``or``/``not``.  Behaviors combine leaves
``(exist CMP N, path)``, ``(equal, path)`` and ``(subset, path)`` with the
same connectives; a bare ``loop_free`` is also a behavior.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .automata import compile_regex
from .pathexpr import (
    ANY_PATH, Alt, Conj, LoopFree, Lit, Neg, PathExpr, Seq, Star, Wild, conj,
    expand_loop_free, seq,
)
from .predicate import DEFAULT_SPACE, CidrError, HeaderSpace, Predicate


class ReqError(Exception):
    pass


class ParseError(ReqError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {msg}")
        self.line = line
        self.col = col


class ValidationError(ReqError):
    pass


class UnknownDevice(ValidationError):
    pass


class PrefixMismatch(ValidationError):
    pass


# ---------------------------------------------------------------- packet space

class PacketSpace:
    prec = 3

    def __str__(self) -> str:
        return _show_ps(self)


@dataclass(frozen=True)
class PsConst(PacketSpace):
    value: bool


@dataclass(frozen=True)
class PsAtom(PacketSpace):
    field: str  # "src" | "dst"
    cidr: str


@dataclass(frozen=True)
class PsNot(PacketSpace):
    item: PacketSpace
    prec = 2


@dataclass(frozen=True)
class PsAnd(PacketSpace):
    items: tuple[PacketSpace, ...]
    prec = 1


@dataclass(frozen=True)
class PsOr(PacketSpace):
    items: tuple[PacketSpace, ...]
    prec = 0


def _show_ps(p: PacketSpace) -> str:
    def wrap(x, min_prec):
        s = _show_ps(x)
        return s if x.prec >= min_prec else f"({s})"

    if isinstance(p, PsConst):
        return "true" if p.value else "false"
    if isinstance(p, PsAtom):
        return f"{p.field}IP in {p.cidr}"
    if isinstance(p, PsNot):
        return "not " + wrap(p.item, 2)
    if isinstance(p, PsAnd):
        return " and ".join(wrap(i, 2) for i in p.items)
    if isinstance(p, PsOr):
        return " or ".join(wrap(i, 1) for i in p.items)
    raise TypeError(p)


def space_predicate(p: PacketSpace, space: HeaderSpace = DEFAULT_SPACE) -> Predicate:
    if isinstance(p, PsConst):
        return space.TRUE if p.value else space.FALSE
    if isinstance(p, PsAtom):
        return space.from_cidr(p.field, p.cidr)
    if isinstance(p, PsNot):
        return ~space_predicate(p.item, space)
    if isinstance(p, PsAnd):
        out = space.TRUE
        for i in p.items:
            out = out & space_predicate(i, space)
        return out
    if isinstance(p, PsOr):
        out = space.FALSE
        for i in p.items:
            out = out | space_predicate(i, space)
        return out
    raise TypeError(p)


# ------------------------------------------------------------------- behaviors

CMPS = ("==", ">=", ">", "<=", "<")


@dataclass(frozen=True)
class Exist:
    cmp: str
    n: int

    def holds(self, count: int) -> bool:
        c, n = self.cmp, self.n
        if c == "==":
            return count == n
        if c == ">=":
            return count >= n
        if c == ">":
            return count > n
        if c == "<=":
            return count <= n
        return count < n

    def __str__(self) -> str:
        return f"exist {self.cmp} {self.n}"


@dataclass(frozen=True)
class Equal:
    def __str__(self) -> str:
        return "equal"


class Behavior:
    prec = 3

    def __str__(self) -> str:
        return _show_b(self)

    def leaves(self) -> Iterator["Leaf"]:
        if isinstance(self, Leaf):
            yield self
        for c in getattr(self, "items", ()):
            yield from c.leaves()
        if isinstance(self, BNot):
            yield from self.item.leaves()


@dataclass(frozen=True)
class Leaf(Behavior):
    op: Exist | Equal
    path: PathExpr


@dataclass(frozen=True)
class Subset(Behavior):
    path: PathExpr


@dataclass(frozen=True)
class BLoopFree(Behavior):
    pass


@dataclass(frozen=True)
class BNot(Behavior):
    item: Behavior
    prec = 2


@dataclass(frozen=True)
class BAnd(Behavior):
    items: tuple[Behavior, ...]
    prec = 1


@dataclass(frozen=True)
class BOr(Behavior):
    items: tuple[Behavior, ...]
    prec = 0


def band(*items: Behavior) -> Behavior:
    flat: list[Behavior] = []
    for it in items:
        flat.extend(it.items if isinstance(it, BAnd) else (it,))
    return flat[0] if len(flat) == 1 else BAnd(tuple(flat))


def bor(*items: Behavior) -> Behavior:
    flat: list[Behavior] = []
    for it in items:
        flat.extend(it.items if isinstance(it, BOr) else (it,))
    return flat[0] if len(flat) == 1 else BOr(tuple(flat))


def _show_b(b: Behavior) -> str:
    def wrap(x, min_prec):
        s = _show_b(x)
        return s if x.prec >= min_prec else f"({s})"

    if isinstance(b, Leaf):
        return f"({b.op}, {b.path})"
    if isinstance(b, Subset):
        return f"(subset, {b.path})"
    if isinstance(b, BLoopFree):
        return "loop_free"
    if isinstance(b, BNot):
        return "not " + wrap(b.item, 2)
    if isinstance(b, BAnd):
        return " and ".join(wrap(i, 2) for i in b.items)
    if isinstance(b, BOr):
        return " or ".join(wrap(i, 1) for i in b.items)
    raise TypeError(b)


@dataclass(frozen=True)
class Requirement:
    packet_space: PacketSpace
    ingress: tuple[str, ...]
    behavior: Behavior

    def __str__(self) -> str:
        return f"({self.packet_space}, [{', '.join(self.ingress)}], {self.behavior})"

    def leaves(self) -> list[Leaf]:
        return list(self.behavior.leaves())


def evaluate_behavior(b: Behavior, vector: tuple[int, ...], dims: list[int] | None = None) -> bool:
    """Truth of ``b`` under the count vector ``vector``.

    The i-th leaf (in ``leaves()`` order) reads component ``dims[i]``;
    by default component ``i``.
    """
    pos = iter(dims if dims is not None else range(len(vector)))

    def ev(x: Behavior) -> bool:
        if isinstance(x, Leaf):
            if not isinstance(x.op, Exist):
                raise ReqError("equal leaves have no count semantics")
            return x.op.holds(vector[next(pos)])
        if isinstance(x, BNot):
            return not ev(x.item)
        if isinstance(x, BAnd):
            return all([ev(i) for i in x.items])  # consume every leaf
        if isinstance(x, BOr):
            return any([ev(i) for i in x.items])
        raise ReqError(f"behavior not desugared: {x}")

    return ev(b)


# ----------------------------------------------------------------------- lexer

KEYWORDS = {
    "and", "or", "not", "true", "false", "in", "loop_free", "exist", "exists",
    "equal", "subset", "srcIP", "dstIP",
}

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<cidr>\d+\.\d+\.\d+\.\d+(?:/\d+)?)
  | (?P<int>\d+(?![\w^]))
  | (?P<cmp>==|>=|<=|>|<|=)
  | (?P<name>[A-Za-z_0-9][\w^\-]*)
  | (?P<punct>[()\[\],.*|])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str  # cidr int cmp name punct eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    out = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            out.append(Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    out.append(Token("eof", "", line, pos - line_start + 1))
    return out


# ---------------------------------------------------------------------- parser

class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: Token | None = None):
        t = tok or self.tok
        shown = t.text or "end of input"
        raise ParseError(f"{msg} (found {shown!r})", t.line, t.col)

    def is_(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("punct", "name", "cmp")

    def expect(self, text: str) -> Token:
        if not self.is_(text):
            self.error(f"expected {text!r}")
        t = self.tok
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.is_(text):
            self.i += 1
            return True
        return False

    def name(self) -> str:
        t = self.tok
        if t.kind != "name" or t.text in KEYWORDS:
            self.error("expected a device name")
        self.i += 1
        return t.text

    # requirements
    def requirements(self) -> list[Requirement]:
        out = []
        while self.tok.kind != "eof":
            out.append(self.requirement())
        return out

    def requirement(self) -> Requirement:
        self.expect("(")
        ps = self.ps_or()
        self.expect(",")
        self.expect("[")
        ingress = [self.name()]
        while self.accept(","):
            ingress.append(self.name())
        self.expect("]")
        self.expect(",")
        beh = self.b_or()
        self.expect(")")
        return Requirement(ps, tuple(ingress), beh)

    # packet space
    def ps_or(self) -> PacketSpace:
        items = [self.ps_and()]
        while self.accept("or"):
            items.append(self.ps_and())
        return items[0] if len(items) == 1 else PsOr(tuple(items))

    def ps_and(self) -> PacketSpace:
        items = [self.ps_not()]
        while self.accept("and"):
            items.append(self.ps_not())
        return items[0] if len(items) == 1 else PsAnd(tuple(items))

    def ps_not(self) -> PacketSpace:
        if self.accept("not"):
            return PsNot(self.ps_not())
        return self.ps_atom()

    def ps_atom(self) -> PacketSpace:
        if self.accept("true"):
            return PsConst(True)
        if self.accept("false"):
            return PsConst(False)
        if self.tok.text in ("srcIP", "dstIP"):
            fld = self.tok.text[:3]
            self.i += 1
            if not (self.accept("in") or self.accept("=")):
                self.error("expected 'in' or '='")
            t = self.tok
            if t.kind != "cidr":
                self.error("expected a CIDR prefix")
            self.i += 1
            try:
                DEFAULT_SPACE.from_cidr(fld, t.text)
            except CidrError as exc:
                raise ParseError(str(exc), t.line, t.col) from None
            return PsAtom(fld, t.text)
        if self.accept("("):
            p = self.ps_or()
            self.expect(")")
            return p
        self.error("expected a packet space")

    # behaviors
    def b_or(self) -> Behavior:
        items = [self.b_and()]
        while self.accept("or"):
            items.append(self.b_and())
        return items[0] if len(items) == 1 else BOr(tuple(items))

    def b_and(self) -> Behavior:
        items = [self.b_not()]
        while self.accept("and"):
            items.append(self.b_not())
        return items[0] if len(items) == 1 else BAnd(tuple(items))

    def b_not(self) -> Behavior:
        if self.accept("not"):
            return BNot(self.b_not())
        return self.b_atom()

    def b_atom(self) -> Behavior:
        if self.accept("loop_free"):
            return BLoopFree()
        open_tok = self.expect("(")
        head = self.tok.text
        if head in ("exist", "exists"):
            self.i += 1
            t = self.tok
            if t.kind != "cmp" or t.text not in CMPS:
                self.error("expected a comparator")
            self.i += 1
            n = self.tok
            if n.kind != "int":
                self.error("expected a count")
            self.i += 1
            self.expect(",")
            path = self.p_alt()
            self.expect(")")
            return Leaf(Exist(t.text, int(n.text)), path)
        if head == "equal":
            self.i += 1
            self.expect(",")
            path = self.p_alt()
            self.expect(")")
            return Leaf(Equal(), path)
        if head == "subset":
            self.i += 1
            self.expect(",")
            path = self.p_alt()
            self.expect(")")
            return Subset(path)
        if self.is_(")"):
            self.error("empty behavior", open_tok)
        b = self.b_or()
        self.expect(")")
        return b

    # paths
    def p_alt(self) -> PathExpr:
        items = [self.p_and()]
        while self.accept("|") or self.accept("or"):
            items.append(self.p_and())
        return items[0] if len(items) == 1 else Alt(tuple(items))

    def p_and(self) -> PathExpr:
        items = [self.p_not()]
        while self.accept("and"):
            items.append(self.p_not())
        return items[0] if len(items) == 1 else Conj(tuple(items))

    def p_not(self) -> PathExpr:
        if self.accept("not"):
            return Neg(self.p_not())
        return self.p_seq()

    def _starts_atom(self) -> bool:
        t = self.tok
        if t.kind == "punct":
            return t.text in ("(", ".")
        return t.kind == "name" and (t.text not in KEYWORDS or t.text == "loop_free")

    def p_seq(self) -> PathExpr:
        if not self._starts_atom():
            self.error("expected a path expression")
        items = []
        while self._starts_atom():
            items.append(self.p_post())
        return items[0] if len(items) == 1 else Seq(tuple(items))

    def p_post(self) -> PathExpr:
        e = self.p_atom()
        while self.accept("*"):
            e = Star(e)
        return e

    def p_atom(self) -> PathExpr:
        if self.accept("."):
            return Wild()
        if self.accept("loop_free"):
            return LoopFree()
        if self.accept("("):
            e = self.p_alt()
            self.expect(")")
            return e
        return Lit(self.name())


def parse(text: str) -> list[Requirement]:
    return _Parser(text).requirements()


def parse_one(text: str) -> Requirement:
    reqs = parse(text)
    if len(reqs) != 1:
        raise ReqError(f"expected one requirement, got {len(reqs)}")
    return reqs[0]


def parse_path(text: str) -> PathExpr:
    p = _Parser(text)
    e = p.p_alt()
    if p.tok.kind != "eof":
        p.error("trailing input")
    return e


# -------------------------------------------------------------------- desugar

def _map_paths(b: Behavior, fn) -> Behavior:
    if isinstance(b, Leaf):
        return Leaf(b.op, fn(b.path))
    if isinstance(b, Subset):
        return Subset(fn(b.path))
    if isinstance(b, BNot):
        return BNot(_map_paths(b.item, fn))
    if isinstance(b, (BAnd, BOr)):
        return type(b)(tuple(_map_paths(i, fn) for i in b.items))
    return b


def _fold_loop_free(b: Behavior, lf: PathExpr) -> Behavior:
    """Conjoin ``lf`` onto leaves reachable through and/or only."""
    if isinstance(b, Leaf):
        return Leaf(b.op, conj(b.path, lf))
    if isinstance(b, (BAnd, BOr)):
        return type(b)(tuple(_fold_loop_free(i, lf) for i in b.items))
    return b


def _has_leaf(b: Behavior) -> bool:
    if isinstance(b, Leaf):
        return True
    if isinstance(b, (BAnd, BOr)):
        return any(_has_leaf(i) for i in b.items)
    return False


def _desugar_b(b: Behavior, lf: PathExpr) -> Behavior:
    if isinstance(b, Subset):
        return band(Leaf(Exist(">=", 1), b.path),
                    Leaf(Exist("==", 0), conj(ANY_PATH, Neg(b.path))))
    if isinstance(b, BLoopFree):
        return Leaf(Exist("==", 0), conj(ANY_PATH, Neg(lf)))
    if isinstance(b, BNot):
        return BNot(_desugar_b(b.item, lf))
    if isinstance(b, BOr):
        return bor(*(_desugar_b(i, lf) for i in b.items))
    if isinstance(b, BAnd):
        plain = [i for i in b.items if not isinstance(i, BLoopFree)]
        folded = len(plain) < len(b.items) and any(_has_leaf(i) for i in plain)
        out = []
        for i in b.items:
            if isinstance(i, BLoopFree):
                if not folded:
                    out.append(_desugar_b(i, lf))
                continue
            d = _desugar_b(i, lf)
            out.append(_fold_loop_free(d, lf) if folded else d)
        return band(*out)
    return b


def desugar(req: Requirement, devices: Iterable[str]) -> Requirement:
    """Expand ``subset`` and ``loop_free`` so that only exist/equal leaves remain.

    A behavior-level ``loop_free`` conjoined with leaf-bearing siblings is
    folded into those leaves' paths; anywhere else it becomes a leaf
    forbidding delivered paths that repeat a device.
    """
    alphabet = sorted(devices)
    lf = expand_loop_free(LoopFree(), alphabet)
    b = _map_paths(req.behavior, lambda p: expand_loop_free(p, alphabet))
    b = _desugar_b(b, lf)
    return Requirement(req.packet_space, req.ingress, b)


# ------------------------------------------------------------------- validate

def check_equal_placement(b: Behavior, top: bool = True) -> None:
    """Equal leaves may only appear at the top level or as top-level conjuncts."""
    if isinstance(b, Leaf):
        if isinstance(b.op, Equal) and not top:
            raise ValidationError("equal may only be used at the top level or under and")
    elif isinstance(b, BAnd):
        for i in b.items:
            check_equal_placement(i, top)
    elif isinstance(b, BOr):
        for i in b.items:
            check_equal_placement(i, False)
    elif isinstance(b, BNot):
        check_equal_placement(b.item, False)


def destinations(path: PathExpr, alphabet: Iterable[str]) -> set[str]:
    """Devices that can end an accepted path (symbols entering accepting states)."""
    d = compile_regex(path, alphabet)
    acc = d.accepting
    return {a for (_, a), r in d.delta.items() if r in acc}


def _needs_delivery(op) -> bool:
    if isinstance(op, Equal):
        return True
    return (op.cmp in (">=", "==") and op.n >= 1) or op.cmp == ">"


def validate(req: Requirement, devices: Iterable[str], prefixes: dict[str, list[Predicate]],
             space: HeaderSpace = DEFAULT_SPACE) -> None:
    """Raise UnknownDevice or PrefixMismatch; return None when consistent.

    Coverage is checked for leaves that demand delivery: the destination
    devices' prefixes must contain the whole dstIP projection of the
    packet space.  Without a dstIP constraint the check is skipped.
    """
    devs = set(devices)
    for d in req.ingress:
        if d not in devs:
            raise UnknownDevice(f"ingress {d} is not a topology device")
    for leaf in req.leaves():
        unknown = sorted(leaf.path.literals() - devs)
        if unknown:
            raise UnknownDevice(f"path {leaf.path} names unknown device(s) {', '.join(unknown)}")
    check_equal_placement(req.behavior)
    dst = space_predicate(req.packet_space, space).project("dst")
    if dst.is_true() or dst.is_empty():
        return
    for leaf in req.leaves():
        if not _needs_delivery(leaf.op):
            continue
        covered = space.FALSE
        dests = destinations(leaf.path, devs)
        for d in dests:
            for p in prefixes.get(d, ()):
                covered = covered | p
        if not dst.issubset(covered):
            names = ", ".join(sorted(dests)) or "no device"
            raise PrefixMismatch(
                f"dstIP space {dst.describe()} is not covered by the prefixes of {names} "
                f"for path {leaf.path}")


# ------------------------------------------------------------------ templates

@dataclass
class Fabric:
    """Devices of a data-center fabric that requirement templates refer to."""

    tors: dict[str, str] = field(default_factory=dict)  # ToR -> its CIDR
    pods: dict[str, int] = field(default_factory=dict)  # ToR -> pod index
    prs: list[str] = field(default_factory=list)
    external: str = "0.0.0.0/0"  # destination space reached via the PRs
    external_src: str = "0.0.0.0/0"


def _hops(n_wild: int) -> list[PathExpr]:
    return [Wild()] * n_wild


def render_templates(kind: str, fabric: Fabric) -> list[Requirement]:
    tors = sorted(fabric.tors)
    out: list[Requirement] = []

    def pair_path(s: str, d: str) -> PathExpr:
        same = fabric.pods.get(s) == fabric.pods.get(d)
        return seq(Lit(s), *_hops(1 if same else 3), Lit(d))

    def tor_space(s: str, d: str) -> PacketSpace:
        return PsAnd((PsAtom("src", fabric.tors[s]), PsAtom("dst", fabric.tors[d])))

    if kind in ("torToTorShortest", "torToTorEcmp", "failureEcmp"):
        op = Exist(">=", 1) if kind == "torToTorShortest" else Equal()
        for s in tors:
            for d in tors:
                if s == d:
                    continue
                if kind == "failureEcmp" and fabric.pods.get(s) == fabric.pods.get(d):
                    continue
                out.append(Requirement(tor_space(s, d), (s,), Leaf(op, pair_path(s, d))))
    elif kind == "torToPr":
        for s in tors:
            if not fabric.prs:
                continue
            leaves = [Leaf(Exist(">=", 1), seq(Lit(s), *_hops(3), Lit(p))) for p in sorted(fabric.prs)]
            ps = PsAnd((PsAtom("src", fabric.tors[s]), PsAtom("dst", fabric.external)))
            out.append(Requirement(ps, (s,), bor(*leaves)))
    elif kind == "prToTor":
        for s in sorted(fabric.prs):
            for d in tors:
                ps = PsAnd((PsAtom("src", fabric.external_src), PsAtom("dst", fabric.tors[d])))
                out.append(Requirement(ps, (s,), Leaf(Exist(">=", 1), seq(Lit(s), *_hops(3), Lit(d)))))
    else:
        raise ReqError(f"unknown template kind {kind!r}")
    return out
