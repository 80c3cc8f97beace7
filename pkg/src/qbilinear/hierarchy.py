"""Moment/localizing relaxations of bilinear programs.

Three constructions share one set of helpers:

* ``npa``    -- one-sided localizing matrices, variables indexed by words
  modulo z/y commutation (optionally projector relations).
* ``new``    -- two-sided localizing matrices built from pairs of
  constraints; the moment matrix is a free symmetric matrix over words.
* ``csplus`` -- the two-sided construction over a single family of PSD
  symbols with trace cyclicity, for the completely positive semidefinite
  cone.

All builders return an :class:`~qbilinear.sdp.SDPInstance` whose
``metadata["layout"]`` holds the :class:`MomentLayout` used.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import words as W
from .model import BilinearProblem, Sense, materialize_box, validate
from .sdp import BlockBuilder, SDPInstance


class HierarchyKind(enum.Enum):
    NPA = "npa"
    NEW = "new"
    CSPLUS = "csplus"


class ValidationFailed(ValueError):
    pass


class WordOutOfRange(KeyError):
    pass


# A constraint as used by the builders: {symbol: coefficient}, symbol 0 = constant.
Coeffs = dict


def _coeffs(vec) -> Coeffs:
    return {i: float(v) for i, v in enumerate(vec) if v != 0}


ONE: Coeffs = {0: 1.0}


def _ins(i: int) -> W.Word:
    return () if i == 0 else (i,)


@dataclass
class MomentLayout:
    """Maps word pairs to SDP variables for one relaxation.

    ``key_of(a, b)`` returns the identification key of the entry ``(a, b)``
    or ``None`` when the entry is identically zero.  Keys are interned into
    ``variables`` in first-use order, which is deterministic because every
    builder walks words in graded-lexicographic order.
    """

    kind: HierarchyKind
    level: int
    N: int
    M: int
    row_words: list
    key_of: Callable
    variables: W.WordArena = field(default_factory=W.WordArena)
    row_index: dict = field(default_factory=dict)
    pair_keys: bool = False

    def __post_init__(self):
        self.row_index = {w: k for k, w in enumerate(self.row_words)}

    def var(self, a: W.Word, b: W.Word) -> Optional[int]:
        key = self.key_of(a, b)
        if key is None:
            return None
        return self.variables.intern(key)

    def label(self, h: int) -> str:
        key = self.variables[h]
        n = self.N
        if self.pair_keys:
            a, b = key
            return f"<{W.format_word(self.row_words[a], n)}|{W.format_word(self.row_words[b], n)}>"
        return W.format_word(key, n)


def entry_index(layout: MomentLayout, u: W.Word, v: W.Word) -> Optional[int]:
    """Variable index of moment-matrix entry ``(u, v)``.

    Raises :class:`WordOutOfRange` if either word is not a row label.
    Returns ``None`` for entries fixed at zero by projector relations.
    """
    u, v = tuple(u), tuple(v)
    if u not in layout.row_index or v not in layout.row_index:
        raise WordOutOfRange((u, v))
    return layout.var(u, v)


# --------------------------------------------------------------- layouts

def npa_key(N: int, rules: Optional[W.RewriteRules] = None):
    def key(w):
        c = W.canonicalize(w, W.EquivalenceKind.ZY_COMMUTATION, N)
        if rules is not None:
            c = W.rewrite(c, rules)
            if c is None:
                return None
        wz, wy = W.subwords_by_type(c, N)
        rev = W.involution(wz) + W.involution(wy)
        return min(c, rev, key=lambda t: (len(t), t))
    return key


def cyclic_key(w):
    a = W.least_rotation(w)
    b = W.least_rotation(W.involution(w))
    return min(a, b)


def npa_layout(N, M, n, rules=None, cap=None) -> MomentLayout:
    rows = W.enumerate_words(N, M, n, cap)
    key = npa_key(N, rules)
    return MomentLayout(HierarchyKind.NPA, n, N, M, rows,
                        lambda a, b: key(W.involution(a) + tuple(b)))


def new_layout(N, M, n, cap=None) -> MomentLayout:
    rows = W.enumerate_words(N, M, n, cap)
    layout = MomentLayout(HierarchyKind.NEW, n, N, M, rows, None)
    index = layout.row_index

    def key(a, b):
        try:
            i, j = index[tuple(a)], index[tuple(b)]
        except KeyError:
            raise WordOutOfRange((a, b)) from None
        return (i, j) if i <= j else (j, i)

    layout.key_of = key
    layout.pair_keys = True
    return layout


def csplus_layout(N, n, cap=None, pairwise=False) -> MomentLayout:
    rows = W.enumerate_words(N, 0, n, cap)
    if pairwise:
        layout = new_layout(N, 0, n, cap)
        layout.kind = HierarchyKind.CSPLUS
        return layout
    return MomentLayout(HierarchyKind.CSPLUS, n, N, 0, rows,
                        lambda a, b: cyclic_key(W.involution(a) + tuple(b)))


# ------------------------------------------------------------ assembly

class _Assembler:
    def __init__(self, layout: MomentLayout, cap: Optional[int]):
        self.layout = layout
        self.blocks: list = []
        self.eq_rows: dict = {}
        self.eq_rhs: list = []
        self.cap = W.DEFAULT_WORD_CAP if cap is None else cap

    def check_size(self, size: int, what: str):
        if size > self.cap:
            raise W.LevelTooLarge(f"{what} of size {size} exceeds cap {self.cap}")

    def moment_block(self):
        rows = self.layout.row_words
        bb = BlockBuilder(len(rows), "moment")
        for i, u in enumerate(rows):
            for j in range(i, len(rows)):
                h = self.layout.var(u, rows[j])
                if h is not None:
                    bb.add(i, j, h)
        self.blocks.append(bb.build())

    def linear(self, terms) -> dict:
        """Merge ``[(coef, a, b), ...]`` into ``{var: coef}``."""
        out: dict = {}
        for coef, a, b in terms:
            h = self.layout.var(a, b)
            if h is not None and coef != 0:
                out[h] = out.get(h, 0.0) + coef
        return {h: c for h, c in out.items() if c != 0}

    def add_equality(self, lin: dict, rhs: float = 0.0, label: str = ""):
        if not lin:
            if rhs != 0:
                raise ValueError(f"inconsistent equality {label}: 0 = {rhs}")
            return
        scale = next(iter(sorted(lin.items())))[1]
        key = (tuple(sorted((h, c / scale) for h, c in lin.items())), rhs / scale)
        if key not in self.eq_rows:
            self.eq_rows[key] = (lin, rhs)

    def two_sided_block(self, f: Coeffs, g: Coeffs, left: list, right: list, label: str):
        """Block with entries sum_ij f^i g^j Omega[r*(i)s, u*(j)v] over
        rows (r, u) in left x right."""
        nl, nr = len(left), len(right)
        size = nl * nr
        self.check_size(size, label)
        bb = BlockBuilder(size, label)
        fi = [(_ins(i), c) for i, c in sorted(f.items())]
        gj = [(_ins(j), c) for j, c in sorted(g.items())]
        lrev = [W.involution(r) for r in left]
        rrev = [W.involution(u) for u in right]
        for p in range(size):
            r, u = divmod(p, nr)
            for q in range(p, size):
                s, v = divmod(q, nr)
                terms = []
                for wi, ci in fi:
                    a = lrev[r] + wi + left[s]
                    for wj, cj in gj:
                        terms.append((ci * cj, a, rrev[u] + wj + right[v]))
                for h, c in self.linear(terms).items():
                    bb.add(p, q, h, c)
        self.blocks.append(bb.build())

    def instance(self, objective: dict, offset: float, kind: str, level: int,
                 extra: Optional[dict] = None) -> SDPInstance:
        n = len(self.layout.variables)
        c = np.zeros(n)
        for h, v in objective.items():
            c[h] += v
        rows, cols, vals, rhs = [], [], [], []
        for k, (lin, r) in enumerate(self.eq_rows.values()):
            for h, v in sorted(lin.items()):
                rows.append(k)
                cols.append(h)
                vals.append(v)
            rhs.append(r)
        E = sp.csr_matrix((vals, (rows, cols)), shape=(len(rhs), n))
        labels = [self.layout.label(h) for h in range(n)]
        meta = {"kind": kind, "level": level, "layout": self.layout,
                "rows": len(self.layout.row_words)}
        meta.update(extra or {})
        return SDPInstance(n, c, self.blocks, E, np.array(rhs, dtype=float), offset,
                           labels, meta)


def _prepare(p: BilinearProblem, n: int, check: bool, materialize: bool) -> BilinearProblem:
    if n < 1:
        raise ValueError("level must be >= 1")
    if check:
        rep = validate(p)
        if not rep.ok:
            raise ValidationFailed("; ".join(rep.messages))
    return materialize_box(p) if materialize else p


def _objective(asm: _Assembler, p: BilinearProblem) -> tuple[dict, float]:
    N = p.N
    terms = []
    for al, be in zip(*np.nonzero(p.A)):
        terms.append((p.A[al, be], (al + 1,), (N + be + 1,)))
    for al in np.nonzero(p.a)[0]:
        terms.append((p.a[al], (al + 1,), ()))
    for be in np.nonzero(p.b)[0]:
        terms.append((p.b[be], (), (N + be + 1,)))
    return asm.linear(terms), p.c


def _normalize(asm: _Assembler):
    asm.add_equality(asm.linear([(1.0, (), ())]), 1.0, "normalization")


def build_npa(p: BilinearProblem, n: int, rules: Optional[W.RewriteRules] = None,
              cap: Optional[int] = None, check: bool = True,
              materialize: bool = True) -> SDPInstance:
    """Level-``n`` relaxation with one-sided localizing matrices.

    Equality constraints ``f = 0`` become ``sum_i f^i m(u* (i) v) = 0`` for
    every row word ``u`` and every ``v`` of length at most ``n - 1``.
    """
    p = _prepare(p, n, check, materialize)
    layout = npa_layout(p.N, p.M, n, rules, cap)
    asm = _Assembler(layout, cap)
    asm.moment_block()
    _normalize(asm)
    short = W.enumerate_words(p.N, p.M, n - 1, cap)
    F = [("1", ONE)] + [(f.label or f"f{k}", _coeffs(f.coeffs))
                         for k, f in enumerate(p.nonneg_constraints())]
    for label, f in F:
        bb = BlockBuilder(len(short), f"loc[{label}]")
        for i, u in enumerate(short):
            for j in range(i, len(short)):
                v = short[j]
                lin = asm.linear([(c, u, _ins(s) + v) for s, c in f.items()])
                for h, c in lin.items():
                    bb.add(i, j, h, c)
        asm.blocks.append(bb.build())
    for f in p.zero_constraints():
        fc = _coeffs(f.coeffs)
        for u in layout.row_words:
            for v in short:
                asm.add_equality(asm.linear([(c, u, _ins(s) + v) for s, c in fc.items()]),
                                 0.0, f.label)
    obj, off = _objective(asm, p)
    layout.variables.freeze()
    return asm.instance(obj, off, "npa", n, {"rules": rules is not None})


def _pairs(F: Sequence, dedupe: bool):
    for a in range(len(F)):
        for b in range(a if dedupe else 0, len(F)):
            yield F[a], F[b]


def _two_sided_family(asm: _Assembler, F: Sequence, n: int, N: int, M: int,
                      dedupe: bool, cap):
    """Localizing blocks of the two-sided hierarchy at level ``n``."""
    if n % 2 == 1:
        half = W.enumerate_words(N, M, (n - 1) // 2, cap)
        for (lf, f), (lg, g) in _pairs(F, dedupe):
            asm.two_sided_block(f, g, half, half, f"loc[{lf},{lg}]")
        return
    h = n // 2
    hp = (n - 2) // 2
    big = W.enumerate_words(N, M, h, cap)
    small = W.enumerate_words(N, M, hp, cap)
    asm.two_sided_block(ONE, ONE, big, big, "loc[1,1]")
    for lf, f in F:
        asm.two_sided_block(f, ONE, small, big, f"loc[{lf}]")
    for (lf, f), (lg, g) in _pairs(F, dedupe):
        asm.two_sided_block(f, g, small, small, f"loc[{lf},{lg}]")


def build_new(p: BilinearProblem, n: int, cap: Optional[int] = None,
              dedupe: bool = True, check: bool = True,
              materialize: bool = True) -> SDPInstance:
    """Level-``n`` relaxation with two-sided localizing matrices.

    Odd levels use every pair of non-negative constraints (the constant
    ``1`` included); even levels use the three block families with
    half-levels ``n/2`` and ``(n-2)/2``.  With ``dedupe`` the pair
    ``(g, f)`` is dropped when ``(f, g)`` is present: the two blocks are
    permutation-similar.
    """
    p = _prepare(p, n, check, materialize)
    layout = new_layout(p.N, p.M, n, cap)
    asm = _Assembler(layout, cap)
    asm.moment_block()
    _normalize(asm)
    F = [("1", ONE)] + [(f.label or f"f{k}", _coeffs(f.coeffs))
                         for k, f in enumerate(p.nonneg_constraints())]
    _two_sided_family(asm, F, n, p.N, p.M, dedupe, cap)
    rows = layout.row_words
    for f in p.zero_constraints():
        fc = _coeffs(f.coeffs)
        for r, s in _short_pairs(p.N + p.M, n - 1):
            rr = W.involution(r)
            for w in rows:
                asm.add_equality(asm.linear([(c, rr + _ins(i) + s, w) for i, c in fc.items()]),
                                 0.0, f.label)
    obj, off = _objective(asm, p)
    layout.variables.freeze()
    return asm.instance(obj, off, "new", n, {"dedupe": dedupe})


def _short_pairs(n_symbols: int, total: int):
    """Pairs of words (r, s) with len(r) + len(s) <= total."""
    for lr in range(total + 1):
        for r in itertools.product(range(1, n_symbols + 1), repeat=lr):
            for ls in range(total - lr + 1):
                for s in itertools.product(range(1, n_symbols + 1), repeat=ls):
                    yield r, s


# ------------------------------------------------------------------ CS+

@dataclass
class MomentEquality:
    """``sum_ab F[a, b] Omega[(a), (b)] = G * Omega[empty, empty]``."""

    F: np.ndarray
    G: float


@dataclass
class CSPlusQuery:
    """Either a membership test for ``target`` or an optimisation of
    ``sum A_ab Lambda_ab`` under moment equalities."""

    N: int
    target: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    equalities: list = field(default_factory=list)
    bound: Optional[float] = None

    def __post_init__(self):
        if self.target is not None:
            K = np.asarray(self.target, dtype=float)
            if K.shape != (self.N, self.N):
                raise ValueError(f"target must be {self.N}x{self.N}")
            if not np.allclose(K, K.T, atol=1e-12):
                raise ValueError("target matrix must be symmetric")
            self.target = K
        elif self.A is None:
            raise ValueError("give either a target matrix or an objective")
        else:
            self.A = np.asarray(self.A, dtype=float)

    @property
    def membership(self) -> bool:
        return self.target is not None


def build_csplus(q: CSPlusQuery, n: int, cap: Optional[int] = None,
                 dedupe: bool = True, pairwise: bool = False) -> SDPInstance:
    """Tracial two-sided relaxation for the completely positive semidefinite cone.

    With ``pairwise`` the moment entries are free symmetric-matrix entries
    tied together by explicit equalities between entries with the same
    trace word (rotation and reversal), instead of sharing variables.
    Both give the same feasible set; the pairwise form is for
    cross-checking.
    """
    if n < 1:
        raise ValueError("level must be >= 1")
    N = q.N
    layout = csplus_layout(N, n, cap, pairwise)
    asm = _Assembler(layout, cap)
    asm.moment_block()
    _normalize(asm)
    F = [("1", ONE)] + [(f"z{a}", {a: 1.0}) for a in range(1, N + 1)]
    if q.bound is not None:
        F += [(f"{q.bound}-z{a}", {0: float(q.bound), a: -1.0}) for a in range(1, N + 1)]
    _two_sided_family(asm, F, n, N, 0, dedupe, cap)
    if pairwise:
        _cyclic_equalities(asm, layout)
    if q.membership:
        for a in range(N):
            for b in range(a, N):
                asm.add_equality(asm.linear([(1.0, (a + 1,), (b + 1,)),
                                             (-q.target[a, b], (), ())]), 0.0, f"K[{a},{b}]")
        obj, off = {}, 0.0
    else:
        for k, eq in enumerate(q.equalities):
            F_ = np.asarray(eq.F, dtype=float)
            terms = [(F_[a, b], (a + 1,), (b + 1,)) for a, b in zip(*np.nonzero(F_))]
            terms.append((-float(eq.G), (), ()))
            asm.add_equality(asm.linear(terms), 0.0, f"eq{k}")
        A = q.A
        obj = asm.linear([(A[a, b], (a + 1,), (b + 1,)) for a, b in zip(*np.nonzero(A))])
        off = 0.0
    layout.variables.freeze()
    return asm.instance(obj, off, "csplus", n,
                        {"membership": q.membership, "pairwise": pairwise})


def _cyclic_equalities(asm: _Assembler, layout: MomentLayout):
    """Tie every entry to the first entry with the same trace word."""
    first: dict = {}
    rows = layout.row_words
    for i, u in enumerate(rows):
        ur = W.involution(u)
        for j in range(i, len(rows)):
            key = cyclic_key(ur + rows[j])
            h = layout.var(u, rows[j])
            if key in first:
                if first[key] != h:
                    asm.add_equality({h: 1.0, first[key]: -1.0}, 0.0, "cyclic")
            else:
                first[key] = h


# ------------------------------------------------------------ embeddings

def _word_value(w, vals) -> float:
    out = 1.0
    for s in w:
        out *= vals[s - 1]
    return out


def rank_one_point(inst: SDPInstance, pt) -> np.ndarray:
    """Variable vector of the moment matrix of a commuting scalar point.

    Works for NPA and two-sided instances.  For NPA built with projector
    relations the point must respect them (0/1 values, one per group).
    """
    layout: MomentLayout = inst.metadata["layout"]
    vals = np.concatenate([np.asarray(pt.z, dtype=float), np.asarray(pt.y, dtype=float)])
    x = np.zeros(inst.var_count)
    rows = layout.row_words
    for h in range(inst.var_count):
        key = layout.variables[h]
        if layout.pair_keys:
            a, b = key
            x[h] = _word_value(rows[a], vals) * _word_value(rows[b], vals)
        else:
            x[h] = _word_value(key, vals)
    return x


def tracial_point(inst: SDPInstance, mats) -> np.ndarray:
    """Moments ``tau(X_w)`` of PSD matrices under the normalised trace.

    The matrices are rescaled by ``sqrt(dim)`` so that
    ``tau(X_a X_b) = Tr[mats_a mats_b]``, matching the membership rows.
    """
    layout: MomentLayout = inst.metadata["layout"]
    mats = [np.asarray(m, dtype=float) for m in mats]
    dim = mats[0].shape[0]
    scaled = [np.sqrt(dim) * m for m in mats]
    rows = layout.row_words
    cache: dict = {}

    def tau(w):
        if w not in cache:
            prod = np.eye(dim)
            for s in w:
                prod = prod @ scaled[s - 1]
            cache[w] = float(np.trace(prod)) / dim
        return cache[w]

    x = np.zeros(inst.var_count)
    for h in range(inst.var_count):
        key = layout.variables[h]
        if layout.pair_keys:
            a, b = key
            x[h] = tau(W.involution(rows[a]) + rows[b])
        else:
            x[h] = tau(key)
    return x
