"""Two-prover one-round games."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..hierarchy import HierarchyKind, build_new, build_npa
from ..model import BilinearProblem, ModelError
from ..sdp import SolveOptions, SolveResult, solve
from ..words import RewriteRules
from .common import box_and_simplex, check_enum


@dataclass(frozen=True)
class Game:
    """Questions ``q1 in [Q1], q2 in [Q2]``, answers ``a1 in [A1], a2 in [A2]``.

    ``pi[q1, q2]`` is the question distribution and ``V[a1, a2, q1, q2]``
    the 0/1 predicate.
    """

    pi: np.ndarray
    V: np.ndarray
    name: str = ""

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        V = np.asarray(self.V, dtype=float)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "V", V)
        if pi.ndim != 2 or V.ndim != 4 or V.shape[2:] != pi.shape:
            raise ModelError("V must have shape (A1, A2, Q1, Q2) matching pi (Q1, Q2)")
        if np.any(pi < 0) or abs(pi.sum() - 1) > 1e-12:
            raise ModelError("pi must be a probability distribution")
        if not np.all((V == 0) | (V == 1)):
            raise ModelError("V must be 0/1 valued")

    @property
    def shape(self):
        A1, A2, Q1, Q2 = self.V.shape
        return Q1, Q2, A1, A2

    def transposed(self) -> "Game":
        return Game(self.pi.T, self.V.transpose(1, 0, 3, 2), self.name + "^T")


def chsh() -> Game:
    V = np.zeros((2, 2, 2, 2))
    for a1, a2, q1, q2 in itertools.product(range(2), repeat=4):
        V[a1, a2, q1, q2] = float((a1 ^ a2) == (q1 & q2))
    return Game(np.full((2, 2), 0.25), V, "CHSH")


def game_to_problem(g: Game) -> BilinearProblem:
    """z indexed by (q1, a1) -> q1*A1 + a1, y by (q2, a2) -> q2*A2 + a2."""
    Q1, Q2, A1, A2 = g.shape
    N, M = Q1 * A1, Q2 * A2
    A = np.zeros((N, M))
    for q1, q2, a1, a2 in itertools.product(range(Q1), range(Q2), range(A1), range(A2)):
        A[q1 * A1 + a1, q2 * A2 + a2] = g.pi[q1, q2] * g.V[a1, a2, q1, q2]
    G = box_and_simplex(N + M, [[q * A1 + a for a in range(A1)] for q in range(Q1)], 0, "e")
    K = box_and_simplex(N + M, [[q * A2 + a for a in range(A2)] for q in range(Q2)], N, "d")
    return BilinearProblem(A, G, K, bound_C=1.0, name=g.name or "game")


def game_rules(g: Game) -> RewriteRules:
    """Projector relations: answers to the same question are orthogonal projectors."""
    Q1, Q2, A1, A2 = g.shape
    N = Q1 * A1
    groups = [tuple(q * A1 + a + 1 for a in range(A1)) for q in range(Q1)]
    groups += [tuple(N + q * A2 + a + 1 for a in range(A2)) for q in range(Q2)]
    return RewriteRules(tuple(groups))


def game_classical_value(g: Game, cap=None) -> float:
    """Exact classical value over deterministic strategies.

    Player 1's strategies are enumerated; player 2 best-responds per question,
    which is the exact maximum over player 2's deterministic strategies.
    """
    Q1, Q2, A1, A2 = g.shape
    check_enum(A1 ** Q1 * A2 ** Q2, cap, "strategy pairs")
    # W[q1, a1, q2, a2] = pi * V
    W = np.einsum("ij,abij->iajb", g.pi, g.V)
    best = -np.inf
    for s1 in itertools.product(range(A1), repeat=Q1):
        gain = sum(W[q1, s1[q1]] for q1 in range(Q1))  # (Q2, A2)
        best = max(best, float(gain.max(axis=1).sum()))
    return best


def game_sdp_value(g: Game, kind=HierarchyKind.NPA, n: int = 1,
                   opts: Optional[SolveOptions] = None) -> SolveResult:
    """Projector rewrite rules are enabled for NPA."""
    p = game_to_problem(g)
    kind = HierarchyKind(kind)
    if kind is HierarchyKind.NPA:
        inst = build_npa(p, n, rules=game_rules(g))
    else:
        inst = build_new(p, n)
    return solve(inst, opts)
