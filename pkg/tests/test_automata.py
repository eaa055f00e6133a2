import itertools
import random

from hypothesis import given, settings, strategies as st

from dpcount.automata import compile_many, compile_regex, complement, minimize
from dpcount.gen import random_path
from dpcount.oracle import path_matches
from dpcount.pathexpr import (
    ANY_PATH, Alt, Conj, Lit, LoopFree, Neg, Seq, Star, Wild, expand_loop_free, loop_free_regex, seq,
    substitute,
)
from dpcount.reqlang import parse_path

ALPHA = ["A", "B", "C", "D"]


def words(rng, n, max_len=6):
    for _ in range(n):
        yield tuple(rng.choice(ALPHA) for _ in range(rng.randint(0, max_len)))


def test_dfa_matches_interpreter_on_random_expressions():
    rng = random.Random(7)
    checked = 0
    for _ in range(150):
        e = random_path(rng, ALPHA)
        d = compile_regex(e, ALPHA)
        for w in words(rng, 1000 // 150 + 7):
            assert d.accepts(w) == path_matches(e, w), (str(e), w)
            checked += 1
    assert checked >= 1000


def test_dfa_exhaustive_short_words():
    rng = random.Random(11)
    all_words = [w for n in range(5) for w in itertools.product(ALPHA, repeat=n)]
    for _ in range(25):
        e = random_path(rng, ALPHA)
        d = compile_regex(e, ALPHA)
        assert [d.accepts(w) for w in all_words] == [path_matches(e, w) for w in all_words], str(e)


exprs = st.recursive(
    st.sampled_from([Lit(a) for a in ALPHA] + [Wild()]),
    lambda inner: st.one_of(
        st.builds(lambda a, b: Seq((a, b)), inner, inner),
        st.builds(lambda a, b: Alt((a, b)), inner, inner),
        st.builds(lambda a, b: Conj((a, b)), inner, inner),
        st.builds(Star, inner),
        st.builds(Neg, inner),
    ),
    max_leaves=6,
)


@settings(max_examples=150, deadline=None)
@given(exprs, st.lists(st.sampled_from(ALPHA), max_size=6))
def test_dfa_agrees_with_interpreter(e, w):
    assert compile_regex(e, ALPHA).accepts(w) == path_matches(e, w)


@settings(max_examples=100, deadline=None)
@given(exprs)
def test_printer_round_trips(e):
    again = parse_path(str(e))
    rng = random.Random(0)
    for w in words(rng, 40):
        assert path_matches(again, w) == path_matches(e, w)
    assert str(again) == str(e)


@settings(max_examples=80, deadline=None)
@given(exprs)
def test_minimize_is_idempotent_and_canonical(e):
    d = compile_regex(e, ALPHA)
    m = minimize(d)
    assert (m.num_states, m.delta, m.outputs) == (d.num_states, d.delta, d.outputs)


@settings(max_examples=80, deadline=None)
@given(exprs, st.lists(st.sampled_from(ALPHA), max_size=6))
def test_complement(e, w):
    assert complement(compile_regex(e, ALPHA)).accepts(w) != compile_regex(e, ALPHA).accepts(w)


def test_waypoint_dfa_size():
    d = compile_regex(parse_path("S .* W .* D"), ["S", "A", "B", "C", "W", "D"])
    assert d.num_states == 4
    assert len(d.accepting) == 1
    assert d.accepts("SABWCD") and not d.accepts("SABCD") and not d.accepts("SWDA")


def test_compile_many_outputs_name_expressions():
    d = compile_many([parse_path("S .* D"), parse_path("S .* E")], ["S", "D", "E", "A"])
    assert d.output("SAD") == frozenset({0})
    assert d.output("SE") == frozenset({1})
    assert d.output("SA") == frozenset()


def test_loop_free_expansion():
    lf = loop_free_regex(ALPHA)
    for n in range(5):
        for w in itertools.product(ALPHA, repeat=n):
            assert path_matches(lf, w) == (len(set(w)) == len(w))
            assert path_matches(LoopFree(), w) == (len(set(w)) == len(w))
    e = expand_loop_free(Conj((seq(Lit("A"), ANY_PATH), LoopFree())), ALPHA)
    assert not any(isinstance(x, LoopFree) for x in e.walk())


def test_substitute_renames_literals():
    e = substitute(parse_path("S .* D"), {"D": "D^1"})
    assert e.literals() == {"S", "D^1"}


def test_empty_language():
    assert compile_regex(Neg(ANY_PATH), ALPHA).is_empty()
    assert compile_regex(Conj((Lit("A"), Lit("B"))), ALPHA).is_empty()
