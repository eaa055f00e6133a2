"""Path expression syntax tree: regular expressions over device names.

Besides the usual concatenation, alternation and star, expressions may use
intersection (``and``) and complement (``not``, relative to all device
sequences over the alphabet).  ``LoopFree`` is sugar that expands to the
language of sequences without a repeated device.
"""

from __future__ import annotations

from dataclasses import dataclass


class PathExpr:
    prec = 5

    def __str__(self) -> str:
        return show(self)

    def walk(self):
        yield self
        for c in self.children():
            yield from c.walk()

    def children(self) -> tuple["PathExpr", ...]:
        return ()

    def literals(self) -> set[str]:
        return {n.name for n in self.walk() if isinstance(n, Lit)}


@dataclass(frozen=True)
class Lit(PathExpr):
    name: str
    prec = 5


@dataclass(frozen=True)
class Wild(PathExpr):
    prec = 5


@dataclass(frozen=True)
class LoopFree(PathExpr):
    prec = 5


@dataclass(frozen=True)
class Star(PathExpr):
    item: PathExpr
    prec = 4

    def children(self):
        return (self.item,)


@dataclass(frozen=True)
class Seq(PathExpr):
    items: tuple[PathExpr, ...]
    prec = 3

    def children(self):
        return self.items


@dataclass(frozen=True)
class Neg(PathExpr):
    item: PathExpr
    prec = 2

    def children(self):
        return (self.item,)


@dataclass(frozen=True)
class Conj(PathExpr):
    items: tuple[PathExpr, ...]
    prec = 1

    def children(self):
        return self.items


@dataclass(frozen=True)
class Alt(PathExpr):
    items: tuple[PathExpr, ...]
    prec = 0

    def children(self):
        return self.items


def seq(*items: PathExpr) -> PathExpr:
    flat: list[PathExpr] = []
    for it in items:
        flat.extend(it.items if isinstance(it, Seq) else (it,))
    return flat[0] if len(flat) == 1 else Seq(tuple(flat))


def alt(*items: PathExpr) -> PathExpr:
    flat: list[PathExpr] = []
    for it in items:
        flat.extend(it.items if isinstance(it, Alt) else (it,))
    return flat[0] if len(flat) == 1 else Alt(tuple(flat))


def conj(*items: PathExpr) -> PathExpr:
    flat: list[PathExpr] = []
    for it in items:
        flat.extend(it.items if isinstance(it, Conj) else (it,))
    return flat[0] if len(flat) == 1 else Conj(tuple(flat))


ANY_PATH = Star(Wild())
NOTHING = Neg(ANY_PATH)


def _wrap(e: PathExpr, min_prec: int) -> str:
    s = show(e)
    return s if e.prec >= min_prec else f"({s})"


def show(e: PathExpr) -> str:
    if isinstance(e, Lit):
        return e.name
    if isinstance(e, Wild):
        return "."
    if isinstance(e, LoopFree):
        return "loop_free"
    if isinstance(e, Star):
        return _wrap(e.item, 4) + "*"
    if isinstance(e, Seq):
        if not e.items:
            raise ValueError("empty sequence has no concrete syntax")
        return " ".join(_wrap(i, 4) for i in e.items)
    if isinstance(e, Neg):
        return "not " + _wrap(e.item, 2)
    if isinstance(e, Conj):
        return " and ".join(_wrap(i, 2) for i in e.items)
    if isinstance(e, Alt):
        return " | ".join(_wrap(i, 1) for i in e.items)
    raise TypeError(f"not a path expression: {e!r}")


def substitute(e: PathExpr, mapping: dict[str, str]) -> PathExpr:
    """Rename device literals."""
    if isinstance(e, Lit):
        return Lit(mapping.get(e.name, e.name))
    if isinstance(e, (Wild, LoopFree)):
        return e
    if isinstance(e, Star):
        return Star(substitute(e.item, mapping))
    if isinstance(e, Neg):
        return Neg(substitute(e.item, mapping))
    return type(e)(tuple(substitute(i, mapping) for i in e.items))


def expand_loop_free(e: PathExpr, alphabet) -> PathExpr:
    """Replace ``loop_free`` atoms with the no-repeated-device language."""
    if isinstance(e, LoopFree):
        return loop_free_regex(alphabet)
    if isinstance(e, (Lit, Wild)):
        return e
    if isinstance(e, Star):
        return Star(expand_loop_free(e.item, alphabet))
    if isinstance(e, Neg):
        return Neg(expand_loop_free(e.item, alphabet))
    return type(e)(tuple(expand_loop_free(i, alphabet) for i in e.items))


def loop_free_regex(alphabet) -> PathExpr:
    """Sequences in which every device of ``alphabet`` occurs at most once.

    Built as a conjunction of one at-most-once constraint per device:
    ``(others)* | (others)* X (others)*``.
    """
    devs = sorted(alphabet)
    parts = []
    for x in devs:
        others = [Lit(d) for d in devs if d != x]
        if others:
            rest = Star(alt(*others))
            parts.append(alt(rest, seq(rest, Lit(x), rest)))
        else:
            # only x exists: empty word or the single x
            parts.append(alt(Star(NOTHING), Lit(x)))
    if not parts:
        return ANY_PATH
    return conj(*parts)
