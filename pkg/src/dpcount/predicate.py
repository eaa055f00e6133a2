"""Packet-set predicates backed by a hash-consed reduced ordered BDD.

Headers are 64-bit values laid out as ``srcIP << 32 | dstIP``.  The diagram
tests destination bits before source bits (most significant bit first),
which keeps destination-prefix predicates shallow.

Node 0 is the FALSE terminal and node 1 the TRUE terminal.  ``size_nodes``
counts every node reachable from a root, terminals included, so
``size_nodes(FALSE) == 1`` and a single /24 prefix has 24 + 2 nodes.
"""

from __future__ import annotations

import ipaddress
from typing import Iterator

FALSE_ID = 0
TRUE_ID = 1


class BddStore:
    """Append-only node table with memoized boolean operations."""

    def __init__(self, num_vars: int):
        self.num_vars = num_vars
        # terminals sit below every variable
        self._var = [num_vars, num_vars]
        self._lo = [-1, -1]
        self._hi = [-1, -1]
        self._unique: dict[tuple[int, int, int], int] = {}
        self._and_cache: dict[tuple[int, int], int] = {}
        self._or_cache: dict[tuple[int, int], int] = {}
        self._not_cache: dict[int, int] = {}
        self._exists_cache: dict[tuple[int, int, int], int] = {}

    def __len__(self) -> int:
        return len(self._var)

    def mk(self, var: int, lo: int, hi: int) -> int:
        if lo == hi:
            return lo
        key = (var, lo, hi)
        node = self._unique.get(key)
        if node is None:
            node = len(self._var)
            self._var.append(var)
            self._lo.append(lo)
            self._hi.append(hi)
            self._unique[key] = node
        return node

    def var_of(self, node: int) -> int:
        return self._var[node]

    def children(self, node: int) -> tuple[int, int]:
        return self._lo[node], self._hi[node]

    def neg(self, a: int) -> int:
        if a < 2:
            return 1 - a
        r = self._not_cache.get(a)
        if r is None:
            r = self.mk(self._var[a], self.neg(self._lo[a]), self.neg(self._hi[a]))
            self._not_cache[a] = r
        return r

    def conj(self, a: int, b: int) -> int:
        if a == FALSE_ID or b == FALSE_ID:
            return FALSE_ID
        if a == TRUE_ID:
            return b
        if b == TRUE_ID or a == b:
            return a
        if a > b:
            a, b = b, a
        key = (a, b)
        r = self._and_cache.get(key)
        if r is not None:
            return r
        va, vb = self._var[a], self._var[b]
        v = min(va, vb)
        a0, a1 = (self._lo[a], self._hi[a]) if va == v else (a, a)
        b0, b1 = (self._lo[b], self._hi[b]) if vb == v else (b, b)
        r = self.mk(v, self.conj(a0, b0), self.conj(a1, b1))
        self._and_cache[key] = r
        return r

    def disj(self, a: int, b: int) -> int:
        if a == TRUE_ID or b == TRUE_ID:
            return TRUE_ID
        if a == FALSE_ID:
            return b
        if b == FALSE_ID or a == b:
            return a
        if a > b:
            a, b = b, a
        key = (a, b)
        r = self._or_cache.get(key)
        if r is not None:
            return r
        va, vb = self._var[a], self._var[b]
        v = min(va, vb)
        a0, a1 = (self._lo[a], self._hi[a]) if va == v else (a, a)
        b0, b1 = (self._lo[b], self._hi[b]) if vb == v else (b, b)
        r = self.mk(v, self.disj(a0, b0), self.disj(a1, b1))
        self._or_cache[key] = r
        return r

    def exists(self, a: int, lo_var: int, hi_var: int) -> int:
        """Existentially quantify variables in ``[lo_var, hi_var)``."""
        if a < 2:
            return a
        key = (a, lo_var, hi_var)
        r = self._exists_cache.get(key)
        if r is not None:
            return r
        v = self._var[a]
        lo = self.exists(self._lo[a], lo_var, hi_var)
        hi = self.exists(self._hi[a], lo_var, hi_var)
        if lo_var <= v < hi_var:
            r = self.disj(lo, hi)
        else:
            r = self.mk(v, lo, hi)
        self._exists_cache[key] = r
        return r

    def cube(self, literals: dict[int, bool]) -> int:
        node = TRUE_ID
        for var in sorted(literals, reverse=True):
            if literals[var]:
                node = self.mk(var, FALSE_ID, node)
            else:
                node = self.mk(var, node, FALSE_ID)
        return node

    def evaluate(self, node: int, assignment) -> bool:
        """``assignment(var) -> bool`` gives the value of each variable."""
        while node > 1:
            node = self._hi[node] if assignment(self._var[node]) else self._lo[node]
        return node == TRUE_ID

    def reachable(self, node: int) -> int:
        seen = set()
        stack = [node]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            if n > 1:
                stack.append(self._lo[n])
                stack.append(self._hi[n])
        return len(seen)

    def pick(self, node: int) -> dict[int, bool] | None:
        """One satisfying partial assignment, preferring 0 branches."""
        if node == FALSE_ID:
            return None
        out: dict[int, bool] = {}
        while node > 1:
            lo = self._lo[node]
            if lo != FALSE_ID:
                out[self._var[node]] = False
                node = lo
            else:
                out[self._var[node]] = True
                node = self._hi[node]
        return out

    def paths(self, node: int) -> Iterator[dict[int, bool]]:
        """Enumerate disjoint cubes whose union is ``node``."""
        if node == FALSE_ID:
            return
        stack: list[tuple[int, dict[int, bool]]] = [(node, {})]
        while stack:
            n, lits = stack.pop()
            if n == TRUE_ID:
                yield lits
                continue
            if n == FALSE_ID:
                continue
            v = self._var[n]
            stack.append((self._hi[n], {**lits, v: True}))
            stack.append((self._lo[n], {**lits, v: False}))


class HeaderSpace:
    """Maps the src/dst address fields onto BDD variables.

    ``bits`` is the width of each field (32 for IPv4; tests shrink it).
    Variables ``0 .. bits-1`` hold dst MSB..LSB, ``bits .. 2*bits-1`` src.
    """

    FIELDS = ("dst", "src")

    def __init__(self, bits: int = 32):
        self.bits = bits
        self.width = 2 * bits
        self.store = BddStore(self.width)
        self.TRUE = Predicate(self, TRUE_ID)
        self.FALSE = Predicate(self, FALSE_ID)

    def field_offset(self, field: str) -> int:
        if field == "dst":
            return 0
        if field == "src":
            return self.bits
        raise ValueError(f"unknown header field {field!r}")

    def pred(self, node: int) -> "Predicate":
        return Predicate(self, node)

    def from_prefix(self, field: str, value: int, length: int) -> "Predicate":
        if not 0 <= length <= self.bits:
            raise ValueError(f"prefix length {length} outside [0, {self.bits}]")
        off = self.field_offset(field)
        lits = {}
        for i in range(length):
            bit = (value >> (self.bits - 1 - i)) & 1
            lits[off + i] = bool(bit)
        return Predicate(self, self.store.cube(lits))

    def from_cidr(self, field: str, cidr: str) -> "Predicate":
        if self.bits != 32:
            raise ValueError("CIDR parsing needs a 32-bit header space")
        try:
            net = ipaddress.IPv4Network(cidr, strict=False)
        except ValueError as exc:
            raise CidrError(f"malformed CIDR {cidr!r}: {exc}") from None
        return self.from_prefix(field, int(net.network_address), net.prefixlen)

    def from_header(self, header: int) -> "Predicate":
        """The singleton predicate of one concrete 64-bit header."""
        src, dst = header >> self.bits, header & ((1 << self.bits) - 1)
        return self.from_prefix("src", src, self.bits) & self.from_prefix("dst", dst, self.bits)

    def header(self, src: int, dst: int) -> int:
        return (src << self.bits) | dst

    def split_header(self, header: int) -> tuple[int, int]:
        return header >> self.bits, header & ((1 << self.bits) - 1)

    def _bit(self, header: int, var: int) -> bool:
        src, dst = self.split_header(header)
        if var < self.bits:
            return bool((dst >> (self.bits - 1 - var)) & 1)
        return bool((src >> (2 * self.bits - 1 - var)) & 1)


class CidrError(ValueError):
    pass


class Predicate:
    """Immutable handle into a header space's BDD store.

    Equal handles denote equal packet sets, so ``==`` and ``hash`` are
    constant time.
    """

    __slots__ = ("space", "node")

    def __init__(self, space: HeaderSpace, node: int):
        self.space = space
        self.node = node

    def __and__(self, other: "Predicate") -> "Predicate":
        return Predicate(self.space, self.space.store.conj(self.node, other.node))

    def __or__(self, other: "Predicate") -> "Predicate":
        return Predicate(self.space, self.space.store.disj(self.node, other.node))

    def __invert__(self) -> "Predicate":
        return Predicate(self.space, self.space.store.neg(self.node))

    def __sub__(self, other: "Predicate") -> "Predicate":
        st = self.space.store
        return Predicate(self.space, st.conj(self.node, st.neg(other.node)))

    def __eq__(self, other) -> bool:
        return isinstance(other, Predicate) and self.node == other.node and self.space is other.space

    def __hash__(self) -> int:
        return hash(self.node)

    def __bool__(self) -> bool:
        return self.node != FALSE_ID

    def __repr__(self) -> str:
        return f"Predicate(#{self.node})"

    def is_empty(self) -> bool:
        return self.node == FALSE_ID

    def is_true(self) -> bool:
        return self.node == TRUE_ID

    def overlaps(self, other: "Predicate") -> bool:
        return self.space.store.conj(self.node, other.node) != FALSE_ID

    def issubset(self, other: "Predicate") -> bool:
        st = self.space.store
        return st.conj(self.node, st.neg(other.node)) == FALSE_ID

    def size_nodes(self) -> int:
        return self.space.store.reachable(self.node)

    def contains(self, header: int) -> bool:
        return self.space.store.evaluate(self.node, lambda v: self.space._bit(header, v))

    def project(self, field: str) -> "Predicate":
        """Existentially drop every variable except those of ``field``."""
        sp = self.space
        keep = sp.field_offset(field)
        if keep == 0:
            node = sp.store.exists(self.node, sp.bits, sp.width)
        else:
            node = sp.store.exists(self.node, 0, sp.bits)
        return Predicate(sp, node)

    def pick_header(self) -> int:
        """Some header in the set, unset bits chosen as 0."""
        lits = self.space.store.pick(self.node)
        if lits is None:
            raise ValueError("empty predicate has no header")
        sp = self.space
        src = dst = 0
        for var, val in lits.items():
            if not val:
                continue
            if var < sp.bits:
                dst |= 1 << (sp.bits - 1 - var)
            else:
                src |= 1 << (2 * sp.bits - 1 - var)
        return sp.header(src, dst)

    def describe(self) -> str:
        """Human-readable union of src/dst cubes (CIDR when prefix-shaped)."""
        if self.is_empty():
            return "false"
        if self.is_true():
            return "true"
        parts = []
        for lits in self.space.store.paths(self.node):
            terms = []
            for field in ("src", "dst"):
                text = _field_text(self.space, field, lits)
                if text is not None:
                    terms.append(f"{field}IP={text}")
            parts.append(" & ".join(terms) if terms else "true")
        parts.sort()
        return " | ".join(parts)


def _field_text(space: HeaderSpace, field: str, lits: dict[int, bool]) -> str | None:
    off = space.field_offset(field)
    fixed = {v - off: b for v, b in lits.items() if off <= v < off + space.bits}
    if not fixed:
        return None
    value = 0
    for i, b in fixed.items():
        if b:
            value |= 1 << (space.bits - 1 - i)
    length = max(fixed) + 1
    if len(fixed) == length:
        if space.bits == 32:
            return f"{ipaddress.IPv4Address(value)}/{length}"
        return f"{value:#x}/{length}"
    mask = 0
    for i in fixed:
        mask |= 1 << (space.bits - 1 - i)
    if space.bits == 32:
        return f"{ipaddress.IPv4Address(value)}&{ipaddress.IPv4Address(mask)}"
    return f"{value:#x}&{mask:#x}"


def union(preds, space: HeaderSpace) -> Predicate:
    out = space.FALSE
    for p in preds:
        out = out | p
    return out


DEFAULT_SPACE = HeaderSpace(32)
TRUE = DEFAULT_SPACE.TRUE
FALSE = DEFAULT_SPACE.FALSE


def from_cidr(field: str, cidr: str, space: HeaderSpace = DEFAULT_SPACE) -> Predicate:
    """Predicate for headers whose ``field`` ('src' or 'dst') lies in ``cidr``."""
    return space.from_cidr(field, cidr)
