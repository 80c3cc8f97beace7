"""Entanglement-assisted coding of k bits over a classical channel."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from ..hierarchy import HierarchyKind, build_new, build_npa
from ..model import BilinearProblem, ModelError
from ..words import RewriteRules
from ..sdp import SolveOptions, SolveResult, Status, solve
from .common import as_fraction, box_and_simplex, check_enum


@dataclass(frozen=True)
class Channel:
    """Transition matrix ``W[y, x] = W(y|x)`` and number of message bits ``k``.

    ``W_exact`` keeps rational entries when the matrix was given exactly
    (integers, fractions or strings like ``"1/3"``), so the classical
    oracle can return an exact value.
    """

    W: np.ndarray
    k: int = 1
    W_exact: Optional[tuple] = None
    name: str = ""

    @classmethod
    def from_entries(cls, rows, k=1, name=""):
        exact = None
        if all(not isinstance(v, float) for r in rows for v in r):
            exact = tuple(tuple(as_fraction(v) for v in r) for r in rows)
            W = np.array([[float(v) for v in r] for r in exact])
        else:
            W = np.array(rows, dtype=float)
        return cls(W, k, exact, name)

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        object.__setattr__(self, "W", W)
        if self.k < 1:
            raise ModelError("k must be at least 1")
        if np.any(W < 0):
            raise ModelError("channel probabilities must be non-negative")
        if not np.allclose(W.sum(axis=0), 1.0, atol=1e-12, rtol=0):
            raise ModelError("each column W(.|x) must sum to 1")

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]

    @property
    def messages(self) -> int:
        return 2 ** self.k


def z_channel() -> Channel:
    """Four inputs, six outputs; output ``y`` is a pair of inputs, each hit w.p. 1/3."""
    pairs = [(0, 1), (2, 3), (0, 2), (1, 3), (0, 3), (1, 2)]
    rows = [[Fraction(1, 3) if x in pr else 0 for x in range(4)] for pr in pairs]
    return Channel.from_entries(rows, 1, "Z")


def channel_to_problem(c: Channel) -> BilinearProblem:
    """z indexed by (i, x) -> i*|X| + x, y indexed by (i, y) -> i*|Y| + y."""
    K, X, Y = c.messages, c.n_in, c.n_out
    N, M = K * X, K * Y
    A = np.zeros((N, M))
    for i in range(K):
        A[i * X:(i + 1) * X, i * Y:(i + 1) * Y] = c.W.T / K
    enc = [[i * X + x for x in range(X)] for i in range(K)]
    dec = [[i * Y + y for i in range(K)] for y in range(Y)]
    G = box_and_simplex(N + M, enc, 0, "e")
    Kc = box_and_simplex(N + M, dec, N, "d")
    return BilinearProblem(A, G, Kc, bound_C=1.0, name=c.name or "channel")


def channel_classical_value(c: Channel, exact: bool = False, cap=None):
    """Best success probability over deterministic encoders and decoders.

    For each encoder the best decoder is picked output by output, which is
    the exact maximum over all decoder functions.  With ``exact`` the value
    is a :class:`fractions.Fraction` (requires ``W_exact``).
    """
    K, X, Y = c.messages, c.n_in, c.n_out
    check_enum(X ** K * K ** Y, cap, "encoder/decoder pairs")
    if exact:
        if c.W_exact is None:
            raise ValueError("exact value needs a rational channel matrix")
        W = c.W_exact
        zero = Fraction(0)
    else:
        W = c.W.tolist()
        zero = 0.0
    best = None
    for enc in itertools.product(range(X), repeat=K):
        total = zero
        for y in range(Y):
            total += max(W[y][enc[i]] for i in range(K))
        if best is None or total > best:
            best = total
    return best / K


def channel_rules(c: Channel) -> RewriteRules:
    """Projector relations for the encoder (per message) and decoder (per output).

    Every POVM can be dilated to a projective measurement on a larger
    space, so imposing the relations does not change the quantum value.
    """
    K, X, Y = c.messages, c.n_in, c.n_out
    N = K * X
    groups = [tuple(i * X + x + 1 for x in range(X)) for i in range(K)]
    groups += [tuple(N + i * Y + y + 1 for i in range(K)) for y in range(Y)]
    return RewriteRules(tuple(groups))


def channel_sdp_value(c: Channel, kind=HierarchyKind.NEW, n: int = 1,
                      opts: Optional[SolveOptions] = None,
                      projective: bool = True) -> SolveResult:
    """Solve a relaxation of the coding problem.

    For NPA the projector relations of :func:`channel_rules` are applied
    unless ``projective`` is false.  Without them the first NPA level is
    unbounded, since nothing limits the second moments ``<z_a z_a>``.
    """
    p = channel_to_problem(c)
    kind = HierarchyKind(kind)
    if kind is HierarchyKind.NEW:
        inst = build_new(p, n)
    else:
        inst = build_npa(p, n, rules=channel_rules(c) if projective else None)
    res = solve(inst, opts)
    if kind is HierarchyKind.NEW and n == 1 and res.status is Status.OPTIMAL:
        # the first two-sided level is bounded by one for every channel
        assert res.value <= 1 + 1e-6, res.value
    return res
