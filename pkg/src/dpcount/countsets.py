"""Count sets: the distinct per-universe delivery-count vectors of a packet class.

A count set is a ``frozenset`` of equal-length integer tuples.  Component
``i`` of a vector is the number of delivered copies whose path matches the
``i``-th tracked expression.
"""

from __future__ import annotations

from typing import Iterable

CountSet = frozenset


class DimensionError(ValueError):
    pass


def zero(m: int) -> CountSet:
    return frozenset({(0,) * m})


def unit(m: int, owners: Iterable[int]) -> CountSet:
    v = [0] * m
    for i in owners:
        v[i] = 1
    return frozenset({tuple(v)})


def _dim(a: CountSet) -> int:
    for v in a:
        return len(v)
    raise DimensionError("empty count set")


def cross_sum(a: CountSet, b: CountSet, cap: int | None = None) -> CountSet:
    """All componentwise sums x + y with x from ``a`` and y from ``b``."""
    if _dim(a) != _dim(b):
        raise DimensionError(f"dimension mismatch {_dim(a)} vs {_dim(b)}")
    if cap is None:
        return frozenset(tuple(p + q for p, q in zip(x, y)) for x in a for y in b)
    return frozenset(tuple(min(p + q, cap) for p, q in zip(x, y)) for x in a for y in b)


def cross_sum_all(sets: Iterable[CountSet], m: int, cap: int | None = None) -> CountSet:
    out = zero(m)
    for s in sets:
        out = cross_sum(out, s, cap)
    return out


def union(a: CountSet, b: CountSet) -> CountSet:
    if _dim(a) != _dim(b):
        raise DimensionError(f"dimension mismatch {_dim(a)} vs {_dim(b)}")
    return a | b


def zero_augment(a: CountSet) -> CountSet:
    return a | zero(_dim(a))


def truncate(c: CountSet, cmp: str, n: int) -> CountSet:
    """Keep only what a scalar comparison against ``n`` can depend on.

    ``>=``/``>`` need the minimum, ``<=``/``<`` the maximum and ``==`` the
    two smallest values.
    """
    if _dim(c) != 1:
        raise DimensionError("minimal counting information needs scalar counts")
    vals = sorted(v[0] for v in c)
    if cmp in (">=", ">"):
        keep = vals[:1]
    elif cmp in ("<=", "<"):
        keep = vals[-1:]
    elif cmp == "==":
        keep = vals[:2]
    else:
        raise ValueError(f"unknown comparator {cmp!r}")
    return frozenset((v,) for v in keep)


def show(c: CountSet) -> str:
    """Render scalar sets as ``{0,1}`` and vector sets as ``{(1,0),(0,1)}``."""
    items = sorted(c)
    if items and len(items[0]) == 1:
        return "{" + ",".join(str(v[0]) for v in items) + "}"
    return "{" + ",".join("(" + ",".join(map(str, v)) + ")" for v in items) + "}"


def size(c: CountSet) -> int:
    return len(c)
