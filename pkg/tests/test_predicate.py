import random

import pytest
from hypothesis import given, settings, strategies as st

from dpcount.predicate import FALSE, TRUE, CidrError, HeaderSpace, from_cidr

SMALL = HeaderSpace(6)  # 12-bit headers
N = 1 << SMALL.width


def random_pred(rng: random.Random, depth: int = 3):
    """Random predicate on the small space plus its bitset (an int of 4096 bits)."""
    if depth == 0 or rng.random() < 0.3:
        field = rng.choice(["src", "dst"])
        length = rng.randint(0, 6)
        value = rng.randrange(64)
        p = SMALL.from_prefix(field, value, length)
        return p, bitset_prefix(field, value, length)
    a, ba = random_pred(rng, depth - 1)
    op = rng.choice("&|~-")
    if op == "~":
        return ~a, ba ^ ((1 << N) - 1)
    b, bb = random_pred(rng, depth - 1)
    if op == "&":
        return a & b, ba & bb
    if op == "|":
        return a | b, ba | bb
    return a - b, ba & ~bb


def bitset_prefix(field, value, length):
    bits = 0
    for h in range(N):
        src, dst = SMALL.split_header(h)
        x = dst if field == "dst" else src
        if length == 0 or (x >> (6 - length)) == (value >> (6 - length)):
            bits |= 1 << h
    return bits


def to_bitset(p):
    return sum(1 << h for h in range(N) if p.contains(h))


def test_cidr_basics():
    assert from_cidr("dst", "0.0.0.0/0") == TRUE
    assert (from_cidr("dst", "10.0.0.0/24") & from_cidr("dst", "10.0.1.0/24")).is_empty()
    assert from_cidr("dst", "10.0.0.0/24") | from_cidr("dst", "10.0.1.0/24") == from_cidr("dst", "10.0.0.0/23")


def test_cidr_errors():
    with pytest.raises(CidrError):
        from_cidr("dst", "10.0.0.300/24")
    with pytest.raises(CidrError):
        from_cidr("dst", "10.0.0.0/33")


def test_size_nodes_convention():
    assert FALSE.size_nodes() == 1
    assert TRUE.size_nodes() == 1
    # one internal node per fixed bit plus both terminals
    assert from_cidr("dst", "10.0.0.0/24").size_nodes() == 26


def test_identities():
    p = from_cidr("src", "192.168.0.0/16")
    q = from_cidr("dst", "10.1.0.0/16")
    assert p & TRUE == p
    assert p | ~p == TRUE
    assert (p & q) == (q & p)
    assert FALSE.is_empty()


def test_contains_and_pick():
    p = from_cidr("src", "1.2.3.0/24") & from_cidr("dst", "10.0.0.0/8")
    h = p.pick_header()
    assert p.contains(h)
    assert not (~p).contains(h)
    with pytest.raises(ValueError):
        FALSE.pick_header()


def test_describe():
    p = from_cidr("dst", "10.0.0.0/23")
    assert p.describe() == "dstIP=10.0.0.0/23"
    assert FALSE.describe() == "false"
    q = from_cidr("src", "1.0.0.0/8") & p
    assert q.describe() == "srcIP=1.0.0.0/8 & dstIP=10.0.0.0/23"


def test_project():
    p = from_cidr("src", "1.0.0.0/8") & from_cidr("dst", "10.0.0.0/23")
    assert p.project("dst") == from_cidr("dst", "10.0.0.0/23")
    assert p.project("src") == from_cidr("src", "1.0.0.0/8")


def test_bitset_oracle_10k_cases():
    rng = random.Random(7)
    preds = [random_pred(rng) for _ in range(150)]
    for p, bits in preds:
        assert to_bitset(p) == bits
    checked = 0
    while checked < 10_000:
        (p, bp), (q, bq) = rng.choice(preds), rng.choice(preds)
        op = rng.randrange(5)
        if op == 0:
            assert ((p & q).is_empty()) == (bp & bq == 0)
            h = rng.randrange(N)
            assert (p & q).contains(h) == bool((bp & bq) >> h & 1)
        elif op == 1:
            assert ((p | q) == (q | p))
            assert ((p | q).is_true()) == (bp | bq == (1 << N) - 1)
        elif op == 2:
            assert (p - q) == (p & ~q)
            assert (p - q).is_empty() == (bp & ~bq == 0)
        elif op == 3:
            assert p.issubset(q) == (bp & ~bq == 0)
        else:
            assert (p == q) == (bp == bq)
        checked += 1


def test_diff_against_bitset_1000():
    rng = random.Random(11)
    for _ in range(1000):
        p, bp = random_pred(rng, 2)
        q, bq = random_pred(rng, 2)
        d = p - q
        assert d == (p & ~q)
        h = rng.randrange(N)
        assert d.contains(h) == bool((bp & ~bq) >> h & 1)


prefixes = st.tuples(st.sampled_from(["src", "dst"]), st.integers(0, 63), st.integers(0, 6))


@st.composite
def preds(draw):
    atoms = draw(st.lists(prefixes, min_size=1, max_size=4))
    out = SMALL.FALSE
    for f, v, n in atoms:
        p = SMALL.from_prefix(f, v, n)
        out = out | p if draw(st.booleans()) else out & ~p
    return out


@settings(max_examples=200, deadline=None)
@given(preds(), preds(), preds())
def test_boolean_laws(p, q, r):
    assert p & (q | r) == (p & q) | (p & r)
    assert ~(p & q) == ~p | ~q
    assert ~~p == p
    assert (p | q) | r == p | (q | r)


@settings(max_examples=100, deadline=None)
@given(preds())
def test_pick_header_member(p):
    if p.is_empty():
        return
    assert p.contains(p.pick_header())
