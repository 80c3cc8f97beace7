import itertools
from collections import deque

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qbilinear.words import (EMPTY, ZERO, EquivalenceKind, LevelTooLarge, RewriteRules,
                             WordArena, canonicalize, concat, enumerate_words, involution,
                             least_rotation, rewrite, subwords_by_type, word_count)

ZY = EquivalenceKind.ZY_COMMUTATION
CYC = EquivalenceKind.CYCLIC

words = st.lists(st.integers(1, 4), max_size=8).map(tuple)


# -- enumeration

def test_enumerate_small():
    # N = M = 1: symbol 1 is z1, symbol 2 is y1
    assert enumerate_words(1, 1, 2) == [(), (1,), (2,), (1, 1), (1, 2), (2, 1), (2, 2)]


def test_enumerate_level_zero():
    assert enumerate_words(3, 4, 0) == [EMPTY]


def test_channel_alphabet_count():
    assert len(enumerate_words(8, 12, 1)) == 21


@pytest.mark.parametrize("n_sym", range(1, 6))
@pytest.mark.parametrize("n", range(0, 5))
def test_count_matches_closed_form(n_sym, n):
    ws = enumerate_words(n_sym, 0, n)
    expected = n + 1 if n_sym == 1 else (n_sym ** (n + 1) - 1) // (n_sym - 1)
    assert len(ws) == expected == word_count(n_sym, n)
    assert len(set(ws)) == len(ws)
    # graded, then lexicographic
    assert ws == sorted(ws, key=lambda w: (len(w), w))


def test_cap_rejects():
    with pytest.raises(LevelTooLarge):
        enumerate_words(4, 4, 6, cap=1000)


def test_bad_arguments():
    with pytest.raises(ValueError):
        enumerate_words(0, 0, 1)
    with pytest.raises(ValueError):
        enumerate_words(1, 1, -1)


# -- canonical forms

def test_zy_examples():
    # N = 2 z-symbols, y-symbols start at 3
    assert canonicalize((3, 1), ZY, N=2) == (1, 3)
    # z1 y3 z2 z2 with N = 2, y3 = symbol 5
    assert canonicalize((1, 5, 2, 2), ZY, N=2) == (1, 2, 2, 5)


def test_cyclic_example():
    assert canonicalize((2, 1, 2), CYC) == (1, 2, 2)


def test_none_is_identity():
    assert canonicalize((3, 1, 2), EquivalenceKind.NONE) == (3, 1, 2)


def test_subwords_examples():
    # z1 y1 y1 y2 z3 y1 with N = 3 (y1 = 4, y2 = 5)
    assert subwords_by_type((1, 4, 4, 5, 3, 4), 3) == ((1, 3), (4, 4, 5, 4))
    assert subwords_by_type((), 3) == ((), ())
    assert subwords_by_type((5, 4), 3) == ((), (5, 4))


@given(words, st.sampled_from(list(EquivalenceKind)))
def test_canonicalize_idempotent(w, kind):
    c = canonicalize(w, kind, N=2)
    assert canonicalize(c, kind, N=2) == c


@given(words)
def test_least_rotation_is_minimal_rotation(w):
    r = least_rotation(w)
    rots = [w[k:] + w[:k] for k in range(len(w))] or [()]
    assert r in rots
    assert r == min(rots)


def _swap_closure(w, N):
    seen = {w}
    todo = deque([w])
    while todo:
        u = todo.popleft()
        for k in range(len(u) - 1):
            a, b = u[k], u[k + 1]
            if (a <= N) != (b <= N):
                v = u[:k] + (b, a) + u[k + 2:]
                if v not in seen:
                    seen.add(v)
                    todo.append(v)
    return seen


def test_zy_classes_match_swap_graph():
    # exhaustive over words of length <= 5 on z1, z2 | y3
    N = 2
    all_words = [w for n in range(6) for w in itertools.product((1, 2, 3), repeat=n)]
    for w in all_words:
        cls = _swap_closure(w, N)
        c = canonicalize(w, ZY, N)
        assert all(canonicalize(v, ZY, N) == c for v in cls)
        same = {v for v in all_words if len(v) == len(w) and canonicalize(v, ZY, N) == c}
        assert same == cls


# -- involution and concatenation

@given(words, words)
def test_involution_laws(u, v):
    assert involution(involution(u)) == u
    assert involution(concat(u, v)) == concat(involution(v), involution(u))
    assert len(concat(u, v)) == len(u) + len(v)


# -- rewrite rules

RULES = RewriteRules(((1, 2), (3, 4)))


def test_rewrite_examples():
    assert rewrite((1, 1), RULES) == (1,)
    assert rewrite((1, 2), RULES) is ZERO
    assert rewrite((1, 3), RULES) == (1, 3)


def test_rewrite_cascades():
    assert rewrite((3, 1, 1, 1, 3), RULES) == (3, 1, 3)
    assert rewrite((1, 3, 3, 1), RULES) == (1, 3, 1)


def test_rules_disjoint():
    with pytest.raises(ValueError):
        RewriteRules(((1, 2), (2, 3)))


@given(st.lists(st.integers(1, 5), max_size=10).map(tuple))
def test_rewrite_shrinks_and_is_fixpoint(w):
    r = rewrite(w, RULES)
    if r is ZERO:
        return
    assert len(r) <= len(w)
    assert rewrite(r, RULES) == r


def test_rewrite_without_annihilation():
    rules = RewriteRules(((1, 2),), allow_zero=False)
    assert rewrite((1, 2), rules) == (1, 2)
    assert rewrite((2, 2, 1), rules) == (2, 1)


# -- arena

def test_arena_freeze():
    a = WordArena([(), (1,)])
    assert a.intern((1,)) == 1
    a.freeze()
    assert a.handle(()) == 0
    with pytest.raises(KeyError):
        a.intern((2,))
