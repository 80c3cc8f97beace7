"""Words in the free *-algebra over z- and y-type symbols.

A word is a tuple of positive symbol indices.  Indices ``1..N`` are z-type,
``N+1..N+M`` are y-type.  The empty tuple is the empty word.  Index 0 never
appears inside a word; it is reserved for the constant slot of constraint
coefficient vectors.
"""
from __future__ import annotations

import enum
import itertools
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence, Tuple

Word = Tuple[int, ...]
EMPTY: Word = ()

#: Sentinel returned by :func:`rewrite` when a word annihilates.
ZERO = None

DEFAULT_WORD_CAP = int(os.environ.get("QBILINEAR_WORD_CAP", 10**6))


class LevelTooLarge(ValueError):
    """Raised when an enumeration or relaxation would exceed the size cap."""


class EquivalenceKind(enum.Enum):
    NONE = "none"
    ZY_COMMUTATION = "zy"
    CYCLIC = "cyclic"


def involution(w: Sequence[int]) -> Word:
    """Reverse a word (the * operation on monomials of hermitian symbols)."""
    return tuple(reversed(w))


def concat(*words: Sequence[int]) -> Word:
    return tuple(itertools.chain.from_iterable(words))


def word_count(n_symbols: int, n: int) -> int:
    """Number of words of length at most ``n`` over ``n_symbols`` letters."""
    if n_symbols == 1:
        return n + 1
    return (n_symbols ** (n + 1) - 1) // (n_symbols - 1)


def iter_words(n_symbols: int, n: int) -> Iterator[Word]:
    for length in range(n + 1):
        yield from itertools.product(range(1, n_symbols + 1), repeat=length)


def enumerate_words(N: int, M: int, n: int, cap: Optional[int] = None) -> list[Word]:
    """All words of length <= n in graded-lexicographic order, empty word first.

    Parameters
    ----------
    N, M : int
        Number of z-type and y-type symbols.
    n : int
        Maximal word length.
    cap : int, optional
        Refuse to enumerate more than this many words.  Defaults to
        ``QBILINEAR_WORD_CAP`` from the environment, else 10**6.
    """
    if N < 0 or M < 0 or N + M < 1:
        raise ValueError("need at least one symbol")
    if n < 0:
        raise ValueError("level must be non-negative")
    cap = DEFAULT_WORD_CAP if cap is None else cap
    count = word_count(N + M, n)
    if count > cap:
        raise LevelTooLarge(f"{count} words of length <= {n} exceed cap {cap}")
    return list(iter_words(N + M, n))


def subwords_by_type(w: Sequence[int], N: int) -> tuple[Word, Word]:
    """Split ``w`` into its z-type and y-type subwords, keeping relative order."""
    wz = tuple(s for s in w if s <= N)
    wy = tuple(s for s in w if s > N)
    return wz, wy


def least_rotation(w: Sequence[int]) -> Word:
    """Lexicographically least rotation (Booth's algorithm, linear time)."""
    n = len(w)
    if n < 2:
        return tuple(w)
    s = list(w) * 2
    fail = [-1] * (2 * n)
    k = 0
    for j in range(1, 2 * n):
        sj = s[j]
        i = fail[j - k - 1]
        while i != -1 and sj != s[k + i + 1]:
            if sj < s[k + i + 1]:
                k = j - i - 1
            i = fail[i]
        if sj != s[k + i + 1]:
            if sj < s[k]:
                k = j
            fail[j - k] = -1
        else:
            fail[j - k] = i + 1
    return tuple(s[k:k + n])


def canonicalize(w: Sequence[int], kind: EquivalenceKind, N: int = 0) -> Word:
    """Canonical representative of ``w`` under ``kind``.

    ``N`` is only needed for z/y commutation, where the canonical form is the
    z-subword followed by the y-subword.
    """
    if kind is EquivalenceKind.ZY_COMMUTATION:
        wz, wy = subwords_by_type(w, N)
        return wz + wy
    if kind is EquivalenceKind.CYCLIC:
        return least_rotation(w)
    return tuple(w)


@dataclass(frozen=True)
class RewriteRules:
    """Projective-measurement relations.

    Each group lists the symbols of one measurement (one question of one
    player).  Inside a group ``p p -> p`` and ``p q -> 0`` for ``p != q``.
    """

    groups: Tuple[Tuple[int, ...], ...]
    allow_zero: bool = True
    _group_of: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        owner = {}
        for g, members in enumerate(self.groups):
            for s in members:
                if s in owner:
                    raise ValueError(f"symbol {s} appears in two groups")
                owner[s] = g
        object.__setattr__(self, "_group_of", owner)

    def group_of(self, s: int) -> Optional[int]:
        return self._group_of.get(s)


def rewrite(w: Sequence[int], rules: RewriteRules) -> Optional[Word]:
    """Apply projector relations to adjacent symbols until nothing changes.

    Returns :data:`ZERO` (``None``) when an orthogonal pair becomes adjacent.
    A single left-to-right stack pass reaches the fixpoint because every
    reduction only ever exposes the pair (stack top, next symbol).
    """
    out: list[int] = []
    for s in w:
        if out:
            top = out[-1]
            if top == s and rules.group_of(s) is not None:
                continue
            g = rules.group_of(s)
            if g is not None and rules.group_of(top) == g:
                if rules.allow_zero:
                    return ZERO
        out.append(s)
    return tuple(out)


class WordArena:
    """Interns words (or word keys) into dense integer handles.

    After :meth:`freeze` no new handles can be created; lookups stay valid.
    """

    def __init__(self, words: Iterable = ()):
        self._index: dict = {}
        self._items: list = []
        self._frozen = False
        for w in words:
            self.intern(w)

    def intern(self, key) -> int:
        h = self._index.get(key)
        if h is None:
            if self._frozen:
                raise KeyError(f"arena is frozen; unknown key {key!r}")
            h = len(self._items)
            self._index[key] = h
            self._items.append(key)
        return h

    def handle(self, key) -> int:
        return self._index[key]

    def __contains__(self, key) -> bool:
        return key in self._index

    def __getitem__(self, h: int):
        return self._items[h]

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def freeze(self) -> "WordArena":
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen


def format_word(w: Optional[Sequence[int]], N: int) -> str:
    if w is None:
        return "0"
    if not w:
        return "1"
    return "".join(f"z{s}" if s <= N else f"y{s - N}" for s in w)
