"""Membership tests and optimisation over the completely positive semidefinite cone."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..hierarchy import CSPlusQuery, MomentEquality, build_csplus
from ..sdp import (FARKAS_MIN_MARGIN, BlockBuilder, Certificate, PSDBlock, SDPInstance,
                   SolveOptions, SolveResult, Status, solve, verify)


class Verdict(enum.Enum):
    FEASIBLE_AT_LEVEL = "feasible_at_level"
    CERTIFIED_OUTSIDE = "certified_outside"
    INCONCLUSIVE = "inconclusive"


@dataclass
class MembershipResult:
    """Outcome of a level-``n`` test.

    ``FEASIBLE_AT_LEVEL`` only says the relaxation is feasible; it does not
    establish membership.  ``margin`` is the optimal slack ``lambda*`` of the
    max-margin problem (negative when the relaxation is infeasible).
    """

    verdict: Verdict
    level: int
    margin: Optional[float] = None
    certificate: Optional[Certificate] = None
    report: dict = field(default_factory=dict)
    result: Optional[SolveResult] = None
    instance: Optional[SDPInstance] = None


def margin_instance(inst: SDPInstance, cap: float = 1.0) -> SDPInstance:
    """maximize t  s.t.  F_j(x) - t I PSD for every block, t <= cap.

    The dual of this problem at a negative optimum is a trace-normalised
    Farkas ray for ``inst``: the multiplier of ``t`` forces
    ``sum_j tr Z_j = 1`` and the remaining stationarity conditions are
    those of the ray.
    """
    t = inst.var_count
    blocks = []
    for blk in inst.blocks:
        d = np.arange(blk.size)
        blocks.append(PSDBlock(blk.size,
                               np.concatenate([blk.rows, d]),
                               np.concatenate([blk.cols, d]),
                               np.concatenate([blk.vars, np.full(blk.size, t)]),
                               np.concatenate([blk.vals, -np.ones(blk.size)]),
                               blk.label))
    bb = BlockBuilder(1, "margin_cap")
    bb.add(0, 0, -1, cap)
    bb.add(0, 0, t, -1.0)
    blocks.append(bb.build())
    c = np.zeros(t + 1)
    c[t] = 1.0
    E = inst.eq_matrix.tocsr().copy()
    E.resize((E.shape[0], t + 1))
    meta = dict(inst.metadata)
    meta["margin_of"] = meta.get("kind", "")
    return SDPInstance(t + 1, c, blocks, E, inst.eq_rhs, 0.0,
                       list(inst.var_labels) + ["t"], meta)


def csplus_membership(K, n: int, opts: Optional[SolveOptions] = None,
                      cap=None, tol: float = 1e-7) -> MembershipResult:
    """Test whether the level-``n`` relaxation admits ``K``.

    Solves the max-margin form of the membership instance.  A non-negative
    margin (within ``tol``) means the relaxation is feasible.  A negative
    margin yields a candidate ray that is checked against the original
    instance by :func:`~qbilinear.sdp.verify`; only a verified Farkas margin
    of at least 1e-6 is reported as a refutation.
    """
    K = np.asarray(K, dtype=float)
    inst = build_csplus(CSPlusQuery(K.shape[0], target=K), n, cap=cap)
    aux = margin_instance(inst)
    res = solve(aux, opts)
    out = MembershipResult(Verdict.INCONCLUSIVE, n, instance=inst)
    if res.value is None and res.Z is not None and res.dual_value is not None \
            and res.dual_value < -tol:
        # no primal optimum (the best margin need not be attained) but the
        # dual iterate bounds it below zero; try it as a ray
        lam = res.dual_value
    elif res.status not in (Status.OPTIMAL, Status.INACCURATE) or res.value is None:
        out.report = {"status": res.status.value, "backend_status": res.backend_status}
        out.result = res
        return out
    else:
        lam = float(res.value)
    out.margin = lam
    x = res.x[:-1] if res.x is not None else None
    primal = SolveResult(res.status, 0.0 if x is not None else None, x, backend=res.backend,
                         backend_status=res.backend_status, iterations=res.iterations,
                         solve_time=res.solve_time)
    out.result = primal
    if lam >= -tol:
        # shift back: x itself is feasible up to the reported slack
        rep = verify(inst, primal, tol=max(10 * tol, 1e-6))
        out.report = {"verify": rep.to_dict(), "lambda": lam}
        out.verdict = Verdict.FEASIBLE_AT_LEVEL if rep.passed else Verdict.INCONCLUSIVE
        return out
    if res.Z is None or res.y is None:
        out.report = {"lambda": lam, "reason": "no dual information"}
        return out
    cert = Certificate([Zk for Zk in res.Z[:len(inst.blocks)]], res.y)
    probe = SolveResult(Status.INFEASIBLE, certificate=cert, backend=res.backend)
    rep = verify(inst, probe)
    out.certificate = cert
    out.report = {"verify": rep.to_dict(), "lambda": lam}
    if res.value is None:
        out.report["lambda_from"] = "dual iterate (upper bound)"
    if rep.certified and rep.margin >= FARKAS_MIN_MARGIN:
        out.verdict = Verdict.CERTIFIED_OUTSIDE
    return out


def csplus_optimize(A, eqs: list, n: int, opts: Optional[SolveOptions] = None,
                    bound: Optional[float] = None, cap=None) -> SolveResult:
    """Upper bound on ``max <A, Lambda>`` over the cone under moment equalities."""
    A = np.asarray(A, dtype=float)
    q = CSPlusQuery(A.shape[0], A=A, equalities=list(eqs), bound=bound)
    return solve(build_csplus(q, n, cap=cap), opts)


def k_matrix() -> np.ndarray:
    """Five-by-five matrix outside the closure of the cone; refuted at level 3."""
    return np.array([[4, 0, 2, 2, 0],
                     [0, 4, 0, 2, 2],
                     [2, 0, 4, 0, 3],
                     [2, 2, 0, 4, 0],
                     [0, 2, 3, 0, 4]], dtype=float)


__all__ = ["Verdict", "MembershipResult", "MomentEquality", "csplus_membership",
           "csplus_optimize", "margin_instance", "k_matrix"]
