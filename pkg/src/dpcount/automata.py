"""Regular path expressions to minimal deterministic automata.

Construction chain: Thompson NFA, subset construction, Moore partition
refinement.  Intersection and complement subterms are compiled to DFAs
first (product / complement) and spliced back into the NFA.

A ``Dfa`` here is partial: the dead state is removed, so a missing
transition means rejection.  Each state carries an output set (the ids of
the expressions that accept there), which lets one automaton track several
expressions at once.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

from .pathexpr import Alt, Conj, LoopFree, Lit, Neg, PathExpr, Seq, Star, Wild, loop_free_regex


@dataclass
class Dfa:
    alphabet: tuple[str, ...]
    num_states: int
    delta: dict[tuple[int, str], int]
    outputs: list[frozenset]  # per state; non-empty means accepting
    initial: int = 0

    @property
    def accepting(self) -> set[int]:
        return {q for q in range(self.num_states) if self.outputs[q]}

    def step(self, q: int | None, sym: str) -> int | None:
        if q is None:
            return None
        return self.delta.get((q, sym))

    def run(self, word: Iterable[str]) -> int | None:
        q: int | None = self.initial if self.num_states else None
        for s in word:
            q = self.step(q, s)
        return q

    def accepts(self, word: Iterable[str]) -> bool:
        q = self.run(word)
        return q is not None and bool(self.outputs[q])

    def output(self, word: Iterable[str]) -> frozenset:
        q = self.run(word)
        return frozenset() if q is None else self.outputs[q]

    def is_empty(self) -> bool:
        return not any(self.outputs)


class _Nfa:
    def __init__(self):
        self.eps: list[list[int]] = []
        self.moves: list[list[tuple[str, int]]] = []

    def new(self) -> int:
        self.eps.append([])
        self.moves.append([])
        return len(self.eps) - 1


def _thompson(e: PathExpr, nfa: _Nfa, alphabet: tuple[str, ...]) -> tuple[int, int]:
    if isinstance(e, Lit):
        s, t = nfa.new(), nfa.new()
        if e.name in alphabet:
            nfa.moves[s].append((e.name, t))
        return s, t
    if isinstance(e, Wild):
        s, t = nfa.new(), nfa.new()
        for a in alphabet:
            nfa.moves[s].append((a, t))
        return s, t
    if isinstance(e, Seq):
        s = t = nfa.new()
        for item in e.items:
            a, b = _thompson(item, nfa, alphabet)
            nfa.eps[t].append(a)
            t = b
        return s, t
    if isinstance(e, Alt):
        s, t = nfa.new(), nfa.new()
        for item in e.items:
            a, b = _thompson(item, nfa, alphabet)
            nfa.eps[s].append(a)
            nfa.eps[b].append(t)
        return s, t
    if isinstance(e, Star):
        s, t = nfa.new(), nfa.new()
        a, b = _thompson(e.item, nfa, alphabet)
        nfa.eps[s] += [a, t]
        nfa.eps[b] += [a, t]
        return s, t
    if isinstance(e, (Conj, Neg, LoopFree)):
        return _splice(compile_regex(e, alphabet), nfa)
    raise TypeError(f"not a path expression: {e!r}")


def _splice(d: Dfa, nfa: _Nfa) -> tuple[int, int]:
    s, t = nfa.new(), nfa.new()
    ids = [nfa.new() for _ in range(d.num_states)]
    if ids:
        nfa.eps[s].append(ids[d.initial])
    for (q, a), r in d.delta.items():
        nfa.moves[ids[q]].append((a, ids[r]))
    for q in range(d.num_states):
        if d.outputs[q]:
            nfa.eps[ids[q]].append(t)
    return s, t


def _closure(nfa: _Nfa, states: Iterable[int]) -> frozenset:
    seen = set(states)
    stack = list(seen)
    while stack:
        q = stack.pop()
        for r in nfa.eps[q]:
            if r not in seen:
                seen.add(r)
                stack.append(r)
    return frozenset(seen)


def _subset(nfa: _Nfa, start: int, final: int, alphabet: tuple[str, ...]) -> Dfa:
    init = _closure(nfa, [start])
    index = {init: 0}
    order = [init]
    delta: dict[tuple[int, str], int] = {}
    i = 0
    while i < len(order):
        cur = order[i]
        moves: dict[str, set[int]] = {}
        for q in cur:
            for a, r in nfa.moves[q]:
                moves.setdefault(a, set()).add(r)
        for a in alphabet:
            if a not in moves:
                continue
            nxt = _closure(nfa, moves[a])
            j = index.get(nxt)
            if j is None:
                j = index[nxt] = len(order)
                order.append(nxt)
            delta[(i, a)] = j
        i += 1
    outputs = [frozenset({0}) if final in st else frozenset() for st in order]
    return Dfa(alphabet, len(order), delta, outputs)


def minimize(d: Dfa) -> Dfa:
    """Moore refinement starting from the partition by output set.

    Works on the completed automaton (an implicit dead state) and then
    drops the dead class and anything unreachable or unable to reach an
    accepting state.  State numbering is canonical: breadth-first from the
    initial state in alphabet order.
    """
    n = d.num_states
    if n == 0:
        return d
    dead = n
    total = n + 1

    def nxt(q: int, a: str) -> int:
        if q == dead:
            return dead
        return d.delta.get((q, a), dead)

    outs = d.outputs + [frozenset()]
    keys = {o: i for i, o in enumerate(sorted(set(outs), key=sorted))}
    block = [keys[outs[q]] for q in range(total)]
    while True:
        sig = {}
        new_block = []
        for q in range(total):
            s = (block[q],) + tuple(block[nxt(q, a)] for a in d.alphabet)
            new_block.append(sig.setdefault(s, len(sig)))
        if len(sig) == len(set(block)):
            block = new_block
            break
        block = new_block
    dead_block = block[dead]
    # reachable quotient, BFS in alphabet order
    start = block[d.initial]
    rep = {}
    for q in range(total):
        rep.setdefault(block[q], q)
    # co-reachability on blocks
    rev: dict[int, set[int]] = {}
    for b, q in rep.items():
        for a in d.alphabet:
            rev.setdefault(block[nxt(q, a)], set()).add(b)
    live = {block[q] for q in range(n) if d.outputs[q]}
    stack = list(live)
    while stack:
        b = stack.pop()
        for p in rev.get(b, ()):
            if p not in live:
                live.add(p)
                stack.append(p)
    live.discard(dead_block)
    if start not in live:
        return Dfa(d.alphabet, 0, {}, [])
    number = {start: 0}
    queue = deque([start])
    delta = {}
    while queue:
        b = queue.popleft()
        q = rep[b]
        for a in d.alphabet:
            c = block[nxt(q, a)]
            if c not in live:
                continue
            if c not in number:
                number[c] = len(number)
                queue.append(c)
            delta[(number[b], a)] = number[c]
    outputs = [frozenset()] * len(number)
    for b, i in number.items():
        outputs[i] = outs[rep[b]]
    return Dfa(d.alphabet, len(number), delta, outputs)


def product(dfas: Sequence[Dfa], combine) -> Dfa:
    """Synchronous product; ``combine`` maps per-component output tuples to an output set.

    Components with no transition become ``None`` (rejecting from then on).
    """
    alphabet = dfas[0].alphabet
    init = tuple(d.initial if d.num_states else None for d in dfas)
    index = {init: 0}
    order = [init]
    delta = {}
    i = 0
    while i < len(order):
        cur = order[i]
        for a in alphabet:
            nxt = tuple(d.step(q, a) for d, q in zip(dfas, cur))
            if all(q is None for q in nxt):
                continue
            j = index.get(nxt)
            if j is None:
                j = index[nxt] = len(order)
                order.append(nxt)
            delta[(i, a)] = j
        i += 1
    outputs = []
    for st in order:
        comp = tuple(d.outputs[q] if q is not None else frozenset() for d, q in zip(dfas, st))
        outputs.append(frozenset(combine(comp)))
    return minimize(Dfa(alphabet, len(order), delta, outputs))


def complement(d: Dfa) -> Dfa:
    alphabet = d.alphabet
    n = d.num_states
    sink = n
    delta = {}
    for q in range(n + 1):
        for a in alphabet:
            r = d.delta.get((q, a), sink) if q < n else sink
            delta[(q, a)] = r
    outputs = [frozenset() if d.outputs[q] else frozenset({0}) for q in range(n)] + [frozenset({0})]
    init = d.initial if n else sink
    if init != 0:
        # keep the initial state at index 0
        perm = {init: 0, 0: init}
        delta = {(perm.get(q, q), a): perm.get(r, r) for (q, a), r in delta.items()}
        outputs[0], outputs[init] = outputs[init], outputs[0]
    return minimize(Dfa(alphabet, n + 1, delta, outputs))


def compile_regex(e: PathExpr, alphabet: Iterable[str]) -> Dfa:
    """Minimal DFA (output set ``{0}`` on accepting states) for ``e``."""
    alpha = tuple(sorted(set(alphabet)))
    if isinstance(e, LoopFree):
        e = loop_free_regex(alpha)
    if isinstance(e, Conj):
        parts = [compile_regex(i, alpha) for i in e.items]
        return product(parts, lambda outs: {0} if all(outs) else ())
    if isinstance(e, Neg):
        return complement(compile_regex(e.item, alpha))
    nfa = _Nfa()
    s, t = _thompson(e, nfa, alpha)
    return minimize(_subset(nfa, s, t, alpha))


def compile_many(exprs: Sequence[PathExpr], alphabet: Iterable[str]) -> Dfa:
    """One DFA whose state outputs name every expression accepting there."""
    alpha = tuple(sorted(set(alphabet)))
    parts = [compile_regex(e, alpha) for e in exprs]
    if not parts:
        return Dfa(alpha, 0, {}, [])
    return product(parts, lambda outs: {i for i, o in enumerate(outs) if o})
