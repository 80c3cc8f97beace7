"""Seeded randomness extractors: classical error and first-level SDP bounds."""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ..model import AffineConstraint, BilinearProblem, ModelError, Sense
from ..sdp import BlockBuilder, SDPInstance, SolveOptions, Status, solve
from ..words import DEFAULT_WORD_CAP, LevelTooLarge
from .common import check_enum

#: Published upper bound on the real Grothendieck constant.
GROTHENDIECK_KG = 1.783


class Variant(enum.Enum):
    FULL = "full"
    SIMPLIFIED = "simplified"


class NonIntegralSupport(ValueError):
    pass


@dataclass(frozen=True)
class Extractor:
    """Functions ``f_s : [2^n] -> [2^m]`` for seeds ``s in [2^d]``.

    ``table[s][i] = f_s(i)``.  ``k`` is the min-entropy of the sources.
    """

    n_bits: int
    d_bits: int
    m_bits: int
    table: tuple
    k: float = 0.0
    name: str = ""

    def __post_init__(self):
        table = tuple(tuple(int(v) for v in row) for row in self.table)
        object.__setattr__(self, "table", table)
        if len(table) != 2 ** self.d_bits or any(len(r) != 2 ** self.n_bits for r in table):
            raise ModelError("table must have 2^d rows of 2^n entries")
        if any(not 0 <= v < 2 ** self.m_bits for r in table for v in r):
            raise ModelError("table entries must lie in [0, 2^m)")
        if not 0 <= self.k <= self.n_bits:
            raise ModelError("min-entropy k must lie in [0, n]")

    def with_k(self, k: float) -> "Extractor":
        return Extractor(self.n_bits, self.d_bits, self.m_bits, self.table, k, self.name)

    def objective(self) -> np.ndarray:
        """``A[i, (s, j)] = 2^-d (delta[f_s(i) = j] - 2^-m)``, pairs as ``s*2^m + j``."""
        N, S, J = 2 ** self.n_bits, 2 ** self.d_bits, 2 ** self.m_bits
        A = np.full((N, S * J), -1.0 / J)
        for s, row in enumerate(self.table):
            for i, j in enumerate(row):
                A[i, s * J + j] += 1.0
        return A / S


def parity_fixture(k: float = 1.0) -> Extractor:
    """n=4, d=1, m=1: seed 0 takes the parity of the low two bits, seed 1 of the high two."""
    f0 = [(i & 1) ^ ((i >> 1) & 1) for i in range(16)]
    f1 = [((i >> 2) & 1) ^ ((i >> 3) & 1) for i in range(16)]
    return Extractor(4, 1, 1, (tuple(f0), tuple(f1)), k, "parity-2x2")


def extractor_to_problem(e: Extractor) -> BilinearProblem:
    """Source ``z`` in the min-entropy polytope, test functions ``y`` in [0, 1].

    Rows: ``z_i >= 0``, ``2^-k - z_i >= 0``, ``sum_i z_i = 1`` and
    ``0 <= y_(s,j) <= 1``.  The classical optimum is the extractor error.
    """
    N, P = 2 ** e.n_bits, 2 ** (e.d_bits + e.m_bits)
    width = N + P + 1
    two_k = 2.0 ** (-e.k)
    G = []
    norm = np.zeros(width)
    norm[0], norm[1:N + 1] = -1.0, 1.0
    G.append(AffineConstraint(norm, Sense.ZERO, "z.norm"))
    for i in range(N):
        lo = np.zeros(width)
        lo[1 + i] = 1.0
        hi = np.zeros(width)
        hi[0], hi[1 + i] = two_k, -1.0
        G.append(AffineConstraint(lo, Sense.NONNEG, f"z.lb[{i}]"))
        G.append(AffineConstraint(hi, Sense.NONNEG, f"z.minent[{i}]"))
    K = []
    for p in range(P):
        lo = np.zeros(width)
        lo[1 + N + p] = 1.0
        hi = np.zeros(width)
        hi[0], hi[1 + N + p] = 1.0, -1.0
        K.append(AffineConstraint(lo, Sense.NONNEG, f"y.lb[{p}]"))
        K.append(AffineConstraint(hi, Sense.NONNEG, f"y.ub[{p}]"))
    return BilinearProblem(e.objective(), G, K, bound_C=1.0,
                           name=e.name or "extractor")


def extractor_to_sdp1(e: Extractor, variant=Variant.SIMPLIFIED, cap=None) -> SDPInstance:
    """Explicit first-level SDP over ``Omega`` indexed by ``[empty, (i), (s, j)]``.

    Both variants share: Omega PSD, entrywise non-negativity, normalisation,
    the min-entropy rows ``2^-k Omega[0, w] >= Omega[(i), w]`` and the
    test-function rows ``Omega[0, w] >= Omega[(s, j), w]``.  ``FULL`` adds
    the three families of rows built from products of two box constraints.
    """
    variant = Variant(variant)
    N, P = 2 ** e.n_bits, 2 ** (e.d_bits + e.m_bits)
    size = 1 + N + P
    cap = DEFAULT_WORD_CAP if cap is None else cap
    if size > cap:
        raise LevelTooLarge(f"matrix of size {size} exceeds cap {cap}")
    I = [1 + i for i in range(N)]
    T = [1 + N + p for p in range(P)]
    W = list(range(size))

    index: dict = {}

    def var(a, b):
        key = (a, b) if a <= b else (b, a)
        h = index.get(key)
        if h is None:
            h = index[key] = len(index)
        return h

    mom = BlockBuilder(size, "moment")
    for a in range(size):
        for b in range(a, size):
            mom.add(a, b, var(a, b))
    blocks = [mom.build()]
    rows: dict = {}

    def ineq(terms, const, label):
        """sum c * Omega[a, b] + const >= 0 as a 1x1 block."""
        lin: dict = {}
        for c, a, b in terms:
            h = var(a, b)
            lin[h] = lin.get(h, 0.0) + c
        lin = {h: c for h, c in lin.items() if c != 0}
        key = (tuple(sorted(lin.items())), const)
        if key in rows:
            return
        bb = BlockBuilder(1, label)
        for h, c in sorted(lin.items()):
            bb.add(0, 0, h, c)
        if const:
            bb.add(0, 0, -1, const)
        rows[key] = bb.build()

    two_k = 2.0 ** (-e.k)
    for a in range(size):
        for b in range(a, size):
            ineq([(1.0, a, b)], 0.0, "entry")
    for w in W:
        for i in I:
            ineq([(two_k, 0, w), (-1.0, i, w)], 0.0, "minent")
        for t in T:
            ineq([(1.0, 0, w), (-1.0, t, w)], 0.0, "test")
    if variant is Variant.FULL:
        for i in I:
            for i2 in I:
                ineq([(1.0, i, i2), (-two_k, i, 0), (-two_k, 0, i2)], two_k ** 2, "minent2")
        for t in T:
            for t2 in T:
                ineq([(1.0, t, t2), (-1.0, 0, t2), (-1.0, t, 0)], 1.0, "test2")
        for i in I:
            for t in T:
                ineq([(1.0, i, t), (-two_k, 0, t), (-1.0, i, 0)], two_k, "mixed")
    blocks.extend(rows.values())

    eq_r, eq_c, eq_v, rhs = [], [], [], []

    def equality(terms, value):
        k = len(rhs)
        for c, a, b in terms:
            eq_r.append(k)
            eq_c.append(var(a, b))
            eq_v.append(c)
        rhs.append(value)

    equality([(1.0, 0, 0)], 1.0)
    for w in W:
        equality([(1.0, 0, w)] + [(-1.0, i, w) for i in I], 0.0)

    A = e.objective()
    c = np.zeros(len(index))
    for i in range(N):
        for p in range(P):
            c[var(I[i], T[p])] += A[i, p]
    n = len(index)
    E = sp.csr_matrix((eq_v, (eq_r, eq_c)), shape=(len(rhs), n))
    labels = [""] * n
    names = ["1"] + [f"z{i}" for i in range(N)] + [f"y{p // 2 ** e.m_bits},{p % 2 ** e.m_bits}"
                                                   for p in range(P)]
    for (a, b), h in index.items():
        labels[h] = f"<{names[a]}|{names[b]}>"
    return SDPInstance(n, c, blocks, E, np.array(rhs), 0.0, labels,
                       {"kind": "extractor", "variant": variant.value, "level": 1})


def extractor_classical_err(e: Extractor, k: Optional[float] = None, cap=None,
                            exact: bool = False):
    """Largest distance from uniform over flat sources on ``2^k`` points.

    The objective is convex in the source, so its maximum over the
    min-entropy polytope sits at a vertex; for integral ``k`` the vertices
    are the flat distributions.
    """
    k = e.k if k is None else k
    if abs(k - round(k)) > 1e-12 or not 0 <= k <= e.n_bits:
        raise NonIntegralSupport(f"k = {k} does not give an integral support size")
    k = int(round(k))
    N, S, J = 2 ** e.n_bits, 2 ** e.d_bits, 2 ** e.m_bits
    size = 2 ** k
    check_enum(math.comb(N, size), cap, "flat sources")
    weight = Fraction(1, size)
    uni = Fraction(1, J)
    # per seed, output histogram of a subset is accumulated incrementally
    best = Fraction(-1)
    for subset in itertools.combinations(range(N), size):
        total = Fraction(0)
        for row in e.table:
            counts = [0] * J
            for i in subset:
                counts[row[i]] += 1
            total += sum(abs(cnt * weight - uni) for cnt in counts)
        if total > best:
            best = total
    val = best / (2 * S)
    return val if exact else float(val)


def extractor_sdp_value(e: Extractor, variant=Variant.SIMPLIFIED,
                        opts: Optional[SolveOptions] = None):
    return solve(extractor_to_sdp1(e, variant), opts)


def extractor_bound_check(e: Extractor, k: Optional[float] = None,
                          opts: Optional[SolveOptions] = None,
                          kg: float = GROTHENDIECK_KG) -> dict:
    """Compare the simplified SDP value with the two classical-error bounds.

    ``thm1``: value <= sqrt(2) sqrt(2^m) sqrt(Err(k)).
    ``thm2``: value <= 6 K_G 2^(n-k) Err(k-1).
    Slacks are right side minus SDP value.
    """
    k = e.k if k is None else k
    if k < 1:
        raise ValueError("the second bound needs k >= 1")
    ek = e.with_k(k)
    res = solve(extractor_to_sdp1(ek, Variant.SIMPLIFIED), opts)
    if res.status is not Status.OPTIMAL:
        raise RuntimeError(f"SDP not solved to optimality: {res.status.value}")
    err_k = extractor_classical_err(ek, k)
    err_km1 = extractor_classical_err(ek, k - 1)
    rhs1 = math.sqrt(2) * math.sqrt(2 ** e.m_bits) * math.sqrt(err_k)
    rhs2 = 6 * kg * 2 ** (e.n_bits - k) * err_km1
    return {"k": k, "sdp": res.value, "err_k": err_k, "err_k_minus_1": err_km1,
            "thm1_rhs": rhs1, "thm1_slack": rhs1 - res.value,
            "thm2_rhs": rhs2, "thm2_slack": rhs2 - res.value,
            "holds": bool(res.value <= rhs1 + 1e-6 and res.value <= rhs2 + 1e-6)}
