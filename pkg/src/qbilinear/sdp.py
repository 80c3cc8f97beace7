"""Solver-facing SDP normal form, conic backends and certificate checks.

An :class:`SDPInstance` is::

    maximize    c'x + offset
    subject to  F_j(x) = F_j0 + sum_k x_k F_jk  is PSD   for every block j
                E x = d

Every hierarchy in the package compiles to this form.  Backends only adapt
it; :func:`verify` re-derives every claim from the instance itself.
"""
from __future__ import annotations

import enum
import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)


class BackendFailure(RuntimeError):
    pass


@dataclass
class PSDBlock:
    """Affine symmetric-matrix map stored as upper-triangle COO terms.

    Each term ``(row, col, var, val)`` with ``row <= col`` adds
    ``val * x[var]`` (or ``val`` when ``var == -1``) to entries
    ``(row, col)`` and ``(col, row)``.  Repeated terms add up.
    """

    size: int
    rows: np.ndarray
    cols: np.ndarray
    vars: np.ndarray
    vals: np.ndarray
    label: str = ""

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("block size must be >= 1")
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.vars = np.asarray(self.vars, dtype=np.int64)
        self.vals = np.asarray(self.vals, dtype=float)
        if np.any(self.rows > self.cols):
            raise ValueError("terms must lie in the upper triangle")

    def matrix(self, x: np.ndarray) -> np.ndarray:
        coef = np.where(self.vars >= 0, x[np.maximum(self.vars, 0)], 1.0) * self.vals
        out = np.zeros((self.size, self.size))
        np.add.at(out, (self.rows, self.cols), coef)
        diag = np.diag(out).copy()
        out = out + out.T
        out[np.diag_indices(self.size)] = diag
        return out

    def constant(self) -> np.ndarray:
        mask = self.vars < 0
        out = np.zeros((self.size, self.size))
        np.add.at(out, (self.rows[mask], self.cols[mask]), self.vals[mask])
        diag = np.diag(out).copy()
        out = out + out.T
        out[np.diag_indices(self.size)] = diag
        return out

    def adjoint(self, Z: np.ndarray, var_count: int) -> np.ndarray:
        """Vector of <Z, F_k> over variables k (Z symmetric)."""
        w = np.where(self.rows == self.cols, 1.0, 2.0) * self.vals * Z[self.rows, self.cols]
        mask = self.vars >= 0
        return np.bincount(self.vars[mask], weights=w[mask], minlength=var_count)

    def canonical_terms(self):
        """Sorted, merged, zero-free term arrays (for structural comparison)."""
        key = np.stack([self.rows, self.cols, self.vars])
        order = np.lexsort(key[::-1])
        k = key[:, order]
        v = self.vals[order]
        if k.shape[1] == 0:
            return k, v
        new = np.ones(k.shape[1], dtype=bool)
        new[1:] = np.any(k[:, 1:] != k[:, :-1], axis=0)
        groups = np.cumsum(new) - 1
        merged = np.zeros(groups[-1] + 1)
        np.add.at(merged, groups, v)
        kk = k[:, new]
        keep = merged != 0
        return kk[:, keep], merged[keep]


class BlockBuilder:
    """Accumulates the terms of one block."""

    def __init__(self, size: int, label: str = ""):
        self.size = size
        self.label = label
        self._r: list[int] = []
        self._c: list[int] = []
        self._v: list[int] = []
        self._x: list[float] = []

    def add(self, i: int, j: int, var: int, val: float = 1.0):
        if val == 0:
            return
        if i > j:
            i, j = j, i
        self._r.append(i)
        self._c.append(j)
        self._v.append(var)
        self._x.append(val)

    def build(self) -> PSDBlock:
        return PSDBlock(self.size, self._r, self._c, self._v, self._x, self.label)


@dataclass
class SDPInstance:
    var_count: int
    objective: np.ndarray
    blocks: list
    eq_matrix: sp.csr_matrix
    eq_rhs: np.ndarray
    offset: float = 0.0
    var_labels: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        self.eq_matrix = sp.csr_matrix(self.eq_matrix, shape=(len(self.eq_rhs), self.var_count))
        self.eq_rhs = np.asarray(self.eq_rhs, dtype=float)
        if self.objective.shape != (self.var_count,):
            raise ValueError("objective length must equal var_count")
        for b in self.blocks:
            if b.vars.size and (b.vars.max() >= self.var_count or b.vars.min() < -1):
                raise ValueError(f"block {b.label!r} references an unknown variable")
            if b.rows.size and b.cols.max() >= b.size:
                raise ValueError(f"block {b.label!r} has an entry outside its size")

    def value_at(self, x: np.ndarray) -> float:
        return float(self.objective @ x + self.offset)

    def statistics(self) -> dict:
        sizes: dict[int, int] = {}
        for b in self.blocks:
            sizes[b.size] = sizes.get(b.size, 0) + 1
        return {
            "variables": self.var_count,
            "equalities": int(self.eq_matrix.shape[0]),
            "psd_blocks": len(self.blocks),
            "block_sizes": {str(k): v for k, v in sorted(sizes.items(), reverse=True)},
            "largest_block": max((b.size for b in self.blocks), default=0),
        }

    def structurally_equal(self, other: "SDPInstance", tol: float = 0.0) -> bool:
        if self.var_count != other.var_count or len(self.blocks) != len(other.blocks):
            return False
        if not np.allclose(self.objective, other.objective, rtol=0, atol=tol):
            return False
        if abs(self.offset - other.offset) > tol:
            return False
        for a, b in zip(self.blocks, other.blocks):
            if a.size != b.size:
                return False
            ka, va = a.canonical_terms()
            kb, vb = b.canonical_terms()
            if ka.shape != kb.shape or np.any(ka != kb) or not np.allclose(va, vb, rtol=0, atol=tol):
                return False
        ea, eb = self.eq_matrix.tocoo(), other.eq_matrix.tocoo()
        if ea.shape != eb.shape:
            return False
        diff = (self.eq_matrix - other.eq_matrix)
        if diff.nnz and np.max(np.abs(diff.data)) > tol:
            return False
        return np.allclose(self.eq_rhs, other.eq_rhs, rtol=0, atol=tol)


# ------------------------------------------------------------------- results

class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    INACCURATE = "inaccurate"
    TIMEOUT = "timeout"


@dataclass
class SolveOptions:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iter: int = 200
    time_limit: Optional[float] = None
    backend: str = "auto"
    verbose: bool = False
    #: "auto" substitutes out the equalities when there are at least a
    #: quarter as many rows as variables; "always" / "never" force it.
    eliminate: str = "auto"

    def __post_init__(self):
        if not (self.feas_tol > 0 and self.gap_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.eliminate not in ("auto", "always", "never"):
            raise ValueError("eliminate must be auto, always or never")


@dataclass
class Certificate:
    """Farkas ray: Z_j PSD, y free with sum_j <Z_j, F_jk> = (E'y)_k for all k
    and sum_j <Z_j, F_j0> + d'y < 0."""

    Z: list
    y: np.ndarray


@dataclass
class SolveResult:
    status: Status
    value: Optional[float] = None
    x: Optional[np.ndarray] = None
    Z: Optional[list] = None
    y: Optional[np.ndarray] = None
    certificate: Optional[Certificate] = None
    backend: str = ""
    backend_status: str = ""
    iterations: int = 0
    solve_time: float = 0.0
    residuals: dict = field(default_factory=dict)
    #: upper bound from the last dual iterate when no optimum was reached
    dual_value: Optional[float] = None

    def to_dict(self) -> dict:
        return {"status": self.status.value, "value": self.value, "backend": self.backend,
                "backend_status": self.backend_status, "iterations": self.iterations,
                "solve_time": self.solve_time, "residuals": self.residuals}


# ------------------------------------------------------- canonical conic form

def svec_index(i, j):
    """Position of (i, j), i <= j, in the column-major upper-triangle vector."""
    return j * (j + 1) // 2 + i


def _split_blocks(inst: SDPInstance):
    scalar = [k for k, b in enumerate(inst.blocks) if b.size == 1]
    matrix = [k for k, b in enumerate(inst.blocks) if b.size > 1]
    return scalar, matrix


def conic_form(inst: SDPInstance, eq_rows: Optional[np.ndarray] = None):
    """Return ``(A, b, cone)`` with ``A x + s = b`` and ``s`` in
    zero^m x nonneg^l x PSD-triangle cones.

    PSD blocks use the scaled column-major upper-triangle vectorisation.
    ``cone`` is ``(m, l, [sizes])`` and the block orders are recorded so
    dual vectors can be mapped back.
    """
    n = inst.var_count
    if eq_rows is None:
        eq_rows = np.arange(inst.eq_matrix.shape[0])
    E = inst.eq_matrix[eq_rows].tocoo()
    rows, cols, vals = [E.row], [E.col], [E.data]
    b = [inst.eq_rhs[eq_rows]]
    offset = E.shape[0]
    scalar, matrix = _split_blocks(inst)
    for k in scalar:
        blk = inst.blocks[k]
        m = blk.vars >= 0
        rows.append(np.full(m.sum(), offset))
        cols.append(blk.vars[m])
        vals.append(-blk.vals[m])
        b.append([blk.vals[~m].sum()])
        offset += 1
    for k in matrix:
        blk = inst.blocks[k]
        pos = svec_index(blk.rows, blk.cols) + offset
        scale = np.where(blk.rows == blk.cols, 1.0, SQRT2) * blk.vals
        m = blk.vars >= 0
        rows.append(pos[m])
        cols.append(blk.vars[m])
        vals.append(-scale[m])
        dim = blk.size * (blk.size + 1) // 2
        h = np.zeros(dim)
        np.add.at(h, pos[~m] - offset, scale[~m])
        b.append(h)
        offset += dim
    A = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(offset, n))
    A.sum_duplicates()
    bvec = np.concatenate([np.asarray(v, dtype=float) for v in b])
    cone = (E.shape[0], len(scalar), [inst.blocks[k].size for k in matrix])
    return A, bvec, cone, scalar, matrix


def smat(v: np.ndarray, size: int) -> np.ndarray:
    iu = np.triu_indices(size)
    pos = svec_index(iu[0], iu[1])
    out = np.zeros((size, size))
    vals = v[pos] / np.where(iu[0] == iu[1], 1.0, SQRT2)
    out[iu] = vals
    out[(iu[1], iu[0])] = vals
    return out


def _unpack_dual(inst, z, scalar, matrix, eq_rows):
    m = len(eq_rows)
    y = np.zeros(inst.eq_matrix.shape[0])
    y[eq_rows] = z[:m]
    Z: list = [None] * len(inst.blocks)
    off = m
    for k in scalar:
        Z[k] = np.array([[z[off]]])
        off += 1
    for k in matrix:
        s = inst.blocks[k].size
        dim = s * (s + 1) // 2
        Z[k] = smat(np.asarray(z[off:off + dim]), s)
        off += dim
    return Z, y


# ------------------------------------------------------ equality elimination

@dataclass
class Reduction:
    """Substitution ``x = x0 + B z`` that removes the equality system.

    ``B`` spans the null space of ``E`` (dense with orthonormal columns from
    the spectral route, sparse from the pivoting route).  ``lift_y`` returns
    a solution of ``E' y = v`` for ``v`` in the row space of ``E``.
    """

    inst: SDPInstance
    x0: np.ndarray
    B: object
    E: sp.csr_matrix
    consistent: bool = True
    residual: Optional[np.ndarray] = None
    U: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None
    rows: Optional[np.ndarray] = None       # independent rows (pivot route)
    pivots: Optional[np.ndarray] = None     # their pivot columns

    def lift_y(self, v: np.ndarray, m: int = 0) -> np.ndarray:
        if self.U is not None:
            return self.E @ (self.U @ ((self.U.T @ v) / self.w))
        y = np.zeros(self.E.shape[0])
        if self.rows.size:
            sq = self.E[self.rows][:, self.pivots].T.tocsc()
            y[self.rows] = spla.splu(sq).solve(v[self.pivots])
        return y


def _block_map(blk: PSDBlock, n: int):
    """Sparse (upper entries x (n + 1)) matrix of a block, last column constant."""
    iu = np.triu_indices(blk.size)
    pos = np.full((blk.size, blk.size), -1, dtype=np.int64)
    pos[iu] = np.arange(iu[0].size)
    col = np.where(blk.vars >= 0, blk.vars, n)
    T = sp.csr_matrix((blk.vals, (pos[blk.rows, blk.cols], col)), shape=(iu[0].size, n + 1))
    return T, iu


def _spectral_split(E: sp.csr_matrix, d: np.ndarray, tol: float):
    w, V = np.linalg.eigh((E.T @ E).toarray())
    big = w > tol * max(float(w[-1]), 1e-300)
    U, wr, B = V[:, big], w[big], V[:, ~big]
    x0 = U @ ((U.T @ (E.T @ d)) / wr)
    return x0, B, U, wr


def _pivot_split(E: sp.csr_matrix, d: np.ndarray, tol: float):
    """Gauss-Jordan elimination with Markowitz-style pivot choice.

    Returns ``(x0, B, rows, pivots)`` or ``None`` when a row reduces to
    ``0 = c`` with ``c != 0``.  Hierarchy equalities typically express one
    short-word entry through longer ones, so the reduced rows stay sparse.
    """
    n = E.shape[1]
    E = E.tocsr()
    rows = []
    for k in range(E.shape[0]):
        sl = slice(E.indptr[k], E.indptr[k + 1])
        rows.append(dict(zip(E.indices[sl].tolist(), E.data[sl].tolist())))
    rhs = [float(v) for v in d]
    scale = [max((abs(v) for v in r.values()), default=0.0) for r in rows]
    col_rows: dict = {}
    for k, r in enumerate(rows):
        for c in r:
            col_rows.setdefault(c, set()).add(k)
    active = set(range(len(rows)))
    piv_row, piv_col = [], []
    while active:
        k = min(active, key=lambda i: (len(rows[i]), i))
        active.discard(k)
        r = rows[k]
        if not r:
            if abs(rhs[k]) > 1e-9 * max(1.0, abs(d[k])):
                return None
            continue
        big = max(abs(v) for v in r.values())
        if big <= tol * max(scale[k], 1e-300):
            if abs(rhs[k]) > 1e-9 * max(1.0, abs(d[k])):
                return None
            for c in r:
                col_rows[c].discard(k)
            rows[k] = {}
            continue
        c = min((c for c, v in r.items() if abs(v) >= 0.5 * big),
                key=lambda c: (len(col_rows[c]), c))
        a = r[c]
        for j in list(col_rows[c]):
            if j == k:
                continue
            rj = rows[j]
            f = rj[c] / a
            for cc, v in r.items():
                nv = rj.get(cc, 0.0) - f * v
                if abs(nv) <= 1e-13 * max(scale[j], 1.0):
                    if cc in rj:
                        del rj[cc]
                        col_rows[cc].discard(j)
                else:
                    if cc not in rj:
                        col_rows[cc].add(j)
                    rj[cc] = nv
            rhs[j] -= f * rhs[k]
        piv_row.append(k)
        piv_col.append(c)
    pivots = np.array(piv_col, dtype=np.int64)
    free = np.setdiff1d(np.arange(n), pivots)
    where = np.full(n, -1, dtype=np.int64)
    where[free] = np.arange(free.size)
    x0 = np.zeros(n)
    bi, bj, bv = [free], [np.arange(free.size)], [np.ones(free.size)]
    for k, c in zip(piv_row, piv_col):
        r = rows[k]
        a = r[c]
        x0[c] = rhs[k] / a
        others = [(cc, v) for cc, v in r.items() if cc != c]
        if others:
            cols, vals = zip(*others)
            bi.append(np.full(len(cols), c))
            bj.append(where[np.array(cols)])
            bv.append(-np.array(vals) / a)
    B = sp.csc_matrix((np.concatenate(bv), (np.concatenate(bi), np.concatenate(bj))),
                      shape=(n, free.size))
    return x0, B, np.array(piv_row, dtype=np.int64), pivots


def eliminate_equalities(inst: SDPInstance, tol: float = 1e-9,
                         method: str = "auto") -> Reduction:
    """Substitute out ``E x = d``.

    ``method="pivot"`` uses sparse Gauss-Jordan elimination (keeps the
    reduced blocks sparse); ``"spectral"`` splits the space with the
    eigendecomposition of ``E'E``, whose eigenvalues below ``tol`` times the
    largest span the null space.  ``"auto"`` tries pivoting and falls back
    to the spectral route for inconsistent systems, where the least-squares
    residual is needed as a Farkas vector.
    """
    n = inst.var_count
    E = sp.csr_matrix(inst.eq_matrix)
    d = inst.eq_rhs
    piv = _pivot_split(E, d, tol) if method in ("auto", "pivot") else None
    if piv is not None:
        x0, B, rows, pivots = piv
        U = wr = None
    else:
        x0, B, U, wr = _spectral_split(E, d, tol)
        rows = pivots = None
    resid = E @ x0 - d
    scale = max(1.0, float(np.max(np.abs(d)))) if d.size else 1.0
    consistent = not resid.size or float(np.max(np.abs(resid))) <= 1e-9 * scale

    blocks = []
    for blk in inst.blocks:
        T, iu = _block_map(blk, n)
        const = T[:, n].toarray().ravel() + T[:, :n] @ x0
        lin = sp.coo_matrix(T[:, :n] @ B)
        lin.sum_duplicates()
        nz = np.abs(lin.data) > 1e-14
        r_idx, v_idx, l_val = lin.row[nz], lin.col[nz], lin.data[nz]
        c_idx = np.nonzero(const)[0]
        blocks.append(PSDBlock(
            blk.size,
            np.concatenate([iu[0][r_idx], iu[0][c_idx]]),
            np.concatenate([iu[1][r_idx], iu[1][c_idx]]),
            np.concatenate([v_idx, np.full(c_idx.size, -1)]),
            np.concatenate([l_val, const[c_idx]]),
            blk.label))
    obj = np.asarray(B.T @ inst.objective).ravel()
    red = SDPInstance(B.shape[1], obj, blocks,
                      sp.csr_matrix((0, B.shape[1])), np.zeros(0),
                      inst.offset + float(inst.objective @ x0), metadata={"reduced": True})
    return Reduction(red, x0, B, E, consistent, resid, U, wr, rows, pivots)


def _lift(inst: SDPInstance, red: Reduction, res: "SolveResult") -> "SolveResult":
    m = inst.eq_matrix.shape[0]
    if res.x is not None:
        res.x = red.x0 + red.B @ res.x
        if res.value is not None and math.isfinite(res.value):
            res.value = inst.value_at(res.x)
    if res.Z is not None:
        v = inst.objective.copy()
        for Zk, blk in zip(res.Z, inst.blocks):
            v += blk.adjoint(Zk, inst.var_count)
        res.y = red.lift_y(v, m)
    if res.certificate is not None:
        v = np.zeros(inst.var_count)
        for Zk, blk in zip(res.certificate.Z, inst.blocks):
            v += blk.adjoint(Zk, inst.var_count)
        res.certificate = Certificate(res.certificate.Z, red.lift_y(v, m))
    return res


def _inconsistent_result(inst: SDPInstance, red: Reduction) -> "SolveResult":
    # Z = 0 and y = E x0 - d: E'y = 0 (x0 is a least-squares solution)
    # and d'y = -|E x0 - d|^2 < 0
    y = np.asarray(red.residual, dtype=float)
    Z = [np.zeros((b.size, b.size)) for b in inst.blocks]
    return SolveResult(Status.INFEASIBLE, certificate=Certificate(Z, y),
                       backend="presolve", backend_status="inconsistent equalities")


def _fixed_point_result(inst: SDPInstance, red: Reduction, feas_tol: float) -> "SolveResult":
    """No free variables left: x0 is the only candidate."""
    x = red.x0
    worst, vec, k_worst = math.inf, None, -1
    for k, blk in enumerate(inst.blocks):
        w, V = np.linalg.eigh(blk.matrix(x))
        if w[0] < worst:
            worst, vec, k_worst = float(w[0]), V[:, 0], k
    if worst >= -feas_tol:
        return SolveResult(Status.OPTIMAL, inst.value_at(x), x, backend="presolve",
                           backend_status="unique point")
    Z = [np.zeros((b.size, b.size)) for b in inst.blocks]
    Z[k_worst] = np.outer(vec, vec)
    res = SolveResult(Status.INFEASIBLE, certificate=Certificate(Z, np.zeros(0)),
                      backend="presolve", backend_status="unique point infeasible")
    return _lift(inst, red, res)


# ------------------------------------------------------------------ backends

def _solve_clarabel(inst: SDPInstance, opts: SolveOptions) -> SolveResult:
    import clarabel

    keep = _independent_rows(inst.eq_matrix, inst.eq_rhs)
    A, b, cone, scalar, matrix = conic_form(inst, keep)
    m, l, sizes = cone
    cones = []
    if m:
        cones.append(clarabel.ZeroConeT(m))
    if l:
        cones.append(clarabel.NonnegativeConeT(l))
    cones += [clarabel.PSDTriangleConeT(s) for s in sizes]
    P = sp.csc_matrix((inst.var_count, inst.var_count))
    settings = clarabel.DefaultSettings()
    settings.verbose = opts.verbose
    settings.tol_feas = opts.feas_tol
    settings.tol_gap_abs = opts.gap_tol
    settings.tol_gap_rel = opts.gap_tol
    settings.max_iter = opts.max_iter
    if opts.time_limit:
        settings.time_limit = float(opts.time_limit)
    solver = clarabel.DefaultSolver(P, -inst.objective, A, b, cones, settings)
    sol = solver.solve()
    st = str(sol.status).split(".")[-1]
    res = SolveResult(Status.INACCURATE, backend="clarabel", backend_status=st,
                      iterations=int(sol.iterations), solve_time=float(sol.solve_time))
    x = np.asarray(sol.x)
    z = np.asarray(sol.z)
    if st in ("Solved", "AlmostSolved"):
        res.status = Status.OPTIMAL if st == "Solved" else Status.INACCURATE
        res.x = x
        res.value = inst.value_at(x)
        res.Z, res.y = _unpack_dual(inst, z, scalar, matrix, keep)
    elif st in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        res.status = Status.INFEASIBLE if st == "PrimalInfeasible" else Status.INACCURATE
        Z, y = _unpack_dual(inst, z, scalar, matrix, keep)
        res.certificate = Certificate(Z, y)
    elif st in ("DualInfeasible", "AlmostDualInfeasible"):
        res.status = Status.UNBOUNDED if st == "DualInfeasible" else Status.INACCURATE
        res.value = math.inf
        res.x = x
    elif st == "MaxTime":
        res.status = Status.TIMEOUT
    return res


def _independent_rows(E: sp.csr_matrix, d: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Indices of a maximal independent subset of the rows of ``[E | d]``.

    The right-hand side takes part so that an inconsistent system stays
    inconsistent after the reduction.
    """

    if E.shape[0] == 0:
        return np.zeros(0, dtype=int)
    aug = np.hstack([E.toarray(), np.asarray(d, dtype=float)[:, None]])
    _, R, piv = la.qr(aug.T, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > tol * max(1.0, d[0]))) if d.size else 0
    return np.sort(piv[:rank])


SCHUR_MIN_WORK = 1e8


def _schur_kkt(G: sp.csc_matrix, dims: dict, A: np.ndarray, chunk_entries: int = 4_000_000):
    """KKT solver for CVXOPT built on the Schur complement of the PSD blocks.

    Eliminating ``uz`` leaves ``[H A'; A 0]`` with
    ``H = G' (W'W)^{-1} G``.  For an 's' block with scaling ``r``,
    ``(W'W)^{-1} U = P U P`` where ``P = rti rti'``.  Writing each column as
    ``sum_e S[e, i] B_e`` over symmetric units ``B_e`` (upper entries
    ``e = (a, b)``) gives ``H = S' Q S`` with
    ``Q[e, f] = tr(P B_e P B_f) = 2 h_e h_f (P_bc P_ad + P_bd P_ac)``
    for ``f = (c, d)`` and ``h = 1/2`` on the diagonal.  This is far cheaper
    than a QR of the scaled ``G`` when the blocks are sparse.  ``H + A'A``
    is factored by Cholesky and the equalities by a small Schur system
    (``H`` alone may be singular).
    """
    import cvxopt
    n = G.shape[1]
    nl = dims["l"]
    Gl = G[:nl].tocsr()
    blocks = []
    off = nl
    for s in dims["s"]:
        Gb = G[off:off + s * s].tocsr()
        cols = np.flatnonzero(np.diff(Gb.tocsc().indptr))
        pos = np.flatnonzero(np.diff(Gb.indptr))
        r, c = pos % s, pos // s
        up = r <= c
        pos, r, c = pos[up], r[up], c[up]
        S = Gb[pos][:, cols]
        if S.nnz > 0.3 * S.shape[0] * max(S.shape[1], 1):
            S = S.toarray()
        h = np.where(r == c, 0.5, 1.0)
        blocks.append((off, s, S, cols, r, c, h))
        off += s * s
    p = A.shape[0]
    acols = np.flatnonzero(np.any(A != 0, axis=0))
    AtA = A[:, acols].T @ A[:, acols]

    def sym(v, s):
        M = v.reshape((s, s), order="F")
        L = np.tril(M)
        return L + np.tril(M, -1).T

    def factor(W):
        di = np.asarray(W["di"]).ravel()
        P = []
        H = np.asarray((Gl.T.multiply(di ** 2) @ Gl).todense()) if nl else np.zeros((n, n))
        for (_, s, S, cols, r, c, h), rti in zip(blocks, W["rti"]):
            R = np.asarray(rti)
            Pk = R @ R.T
            P.append(Pk)
            ne = r.size
            QS = np.empty((ne, len(cols)))
            step = max(1, chunk_entries // max(ne, 1))
            Pc, Pr = Pk[c], Pk[r]
            for e0 in range(0, ne, step):
                sl = slice(e0, e0 + step)
                Q = Pc[sl][:, r]
                Q *= Pr[sl][:, c]
                Q2 = Pc[sl][:, c]
                Q2 *= Pr[sl][:, r]
                Q += Q2
                Q *= 2.0 * h[sl, None]
                Q *= h[None, :]
                QS[sl] = (S.T @ Q.T).T if sp.issparse(S) else Q @ S
            X = S.T @ QS
            if len(cols) == n:
                H += X
            else:
                H[np.ix_(cols, cols)] += X
        if p:
            H[np.ix_(acols, acols)] += AtA
        try:
            cho = la.cho_factor(H, lower=True, check_finite=False)
            if p:
                HiAt = la.cho_solve(cho, A.T, check_finite=False)
                Sch = la.cho_factor(A @ HiAt, lower=True, check_finite=False)
        except (ValueError, la.LinAlgError) as exc:
            raise ArithmeticError(str(exc)) from exc

        def solve_kkt(x, y, z):
            bz = np.asarray(z).ravel()
            by = np.asarray(y).ravel()
            u = np.empty_like(bz)
            u[:nl] = bz[:nl] * di ** 2
            for (o, s, *_), Pk in zip(blocks, P):
                u[o:o + s * s] = (Pk @ sym(bz[o:o + s * s], s) @ Pk).ravel(order="F")
            r1 = np.asarray(x).ravel() + G.T @ u
            if p:
                r1 = r1 + A.T @ by
                t = la.cho_solve(cho, r1, check_finite=False)
                uy = la.cho_solve(Sch, A @ t - by, check_finite=False)
                ux = t - HiAt @ uy
            else:
                ux = la.cho_solve(cho, r1, check_finite=False)
            v = G @ ux - bz
            out = np.empty_like(bz)
            out[:nl] = v[:nl] * di
            for (o, s, *_), rti in zip(blocks, W["rti"]):
                R = np.asarray(rti)
                out[o:o + s * s] = (R.T @ sym(v[o:o + s * s], s) @ R).ravel(order="F")
            x[:] = cvxopt.matrix(ux)
            if p:
                y[:] = cvxopt.matrix(uy)
            z[:] = cvxopt.matrix(out)
        return solve_kkt
    return factor


def _solve_cvxopt(inst: SDPInstance, opts: SolveOptions) -> SolveResult:
    import cvxopt
    from cvxopt import solvers

    n = inst.var_count
    keep = _independent_rows(inst.eq_matrix, inst.eq_rhs)
    E = inst.eq_matrix[keep].tocoo()
    scalar, matrix = _split_blocks(inst)
    rows, cols, vals, h = [], [], [], []
    off = 0
    for k in scalar:
        blk = inst.blocks[k]
        msk = blk.vars >= 0
        rows.append(np.full(msk.sum(), off))
        cols.append(blk.vars[msk])
        vals.append(-blk.vals[msk])
        h.append([blk.vals[~msk].sum()])
        off += 1
    for k in matrix:
        blk = inst.blocks[k]
        s = blk.size
        # column-major full storage, both triangles
        lower = blk.rows != blk.cols
        r_all = np.concatenate([blk.rows, blk.cols[lower]])
        c_all = np.concatenate([blk.cols, blk.rows[lower]])
        v_all = np.concatenate([blk.vars, blk.vars[lower]])
        x_all = np.concatenate([blk.vals, blk.vals[lower]])
        pos = c_all * s + r_all + off
        msk = v_all >= 0
        rows.append(pos[msk])
        cols.append(v_all[msk])
        vals.append(-x_all[msk])
        hh = np.zeros(s * s)
        np.add.at(hh, pos[~msk] - off, x_all[~msk])
        h.append(hh)
        off += s * s
    G = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(off, n)).tocsr().tocoo()
    if G.nnz > 0.2 * off * n:
        # dense storage is much faster once the columns fill in (e.g. after
        # equality elimination)
        Gc = cvxopt.matrix(G.toarray())
    else:
        Gc = cvxopt.spmatrix(G.data.tolist(), G.row.tolist(), G.col.tolist(), (off, n))
    hc = cvxopt.matrix(np.concatenate([np.asarray(v, float) for v in h])) if h else cvxopt.matrix(0.0, (0, 1))
    Ac = cvxopt.spmatrix(E.data.tolist(), E.row.tolist(), E.col.tolist(), (E.shape[0], n))
    bc = cvxopt.matrix(inst.eq_rhs[keep]) if keep.size else cvxopt.matrix(0.0, (0, 1))
    cc = cvxopt.matrix(-inst.objective)
    dims = {"l": len(scalar), "q": [], "s": [inst.blocks[k].size for k in matrix]}
    options = {"show_progress": opts.verbose, "abstol": opts.gap_tol, "reltol": opts.gap_tol,
               "feastol": opts.feas_tol, "maxiters": opts.max_iter,
}
    t0 = time.perf_counter()
    try:
        kkt = os.environ.get("QBILINEAR_KKT") or None
        if kkt is None and dims["s"] and off * n * n > SCHUR_MIN_WORK:
            # the default QR route costs ~ rows * n^2 per iteration; the
            # normal equations lose accuracy near the optimum, hence the
            # extra refinement steps
            kkt = _schur_kkt(G.tocsc(), dims, E.toarray())
            options["refinement"] = 3
        sol = solvers.conelp(cc, Gc, hc, dims, Ac, bc, options=options, kktsolver=kkt)
    except (ValueError, ArithmeticError) as exc:
        raise BackendFailure(str(exc)) from exc
    elapsed = time.perf_counter() - t0
    st = sol["status"]
    res = SolveResult(Status.INACCURATE, backend="cvxopt", backend_status=st,
                      iterations=int(sol.get("iterations", 0)), solve_time=elapsed)

    def unpack(zv, yv):
        zv = np.asarray(zv).ravel()
        Z: list = [None] * len(inst.blocks)
        o = 0
        for k in scalar:
            Z[k] = np.array([[zv[o]]])
            o += 1
        for k in matrix:
            s = inst.blocks[k].size
            Zk = zv[o:o + s * s].reshape((s, s), order="F")
            Z[k] = 0.5 * (Zk + Zk.T)
            o += s * s
        y = np.zeros(inst.eq_matrix.shape[0])
        y[keep] = np.asarray(yv).ravel() if keep.size else 0.0
        return Z, y

    def near(key, bound):
        return sol.get(key) is not None and abs(sol[key]) < bound

    # an early stop (e.g. singular KKT) near a zero optimum has a useless
    # relative gap, so a small absolute gap also counts
    if st == "optimal" or (st == "unknown" and sol.get("x") is not None
                            and (near("relative gap", 1e-5) or near("gap", 1e-6))
                            and near("primal infeasibility", 1e-6)):
        res.status = Status.OPTIMAL if st == "optimal" else Status.INACCURATE
        res.x = np.asarray(sol["x"]).ravel()
        res.value = inst.value_at(res.x)
        res.Z, res.y = unpack(sol["z"], sol["y"])
    elif st == "primal infeasible":
        res.status = Status.INFEASIBLE
        Z, y = unpack(sol["z"], sol["y"])
        res.certificate = Certificate(Z, y)
    elif st == "dual infeasible":
        res.status = Status.UNBOUNDED
        res.value = math.inf
    elif sol.get("z") is not None and sol.get("y") is not None:
        # keep the last dual iterate: callers may still check it as a
        # certificate (value stays None)
        res.Z, res.y = unpack(sol["z"], sol["y"])
        if sol.get("dual objective") is not None:
            res.dual_value = inst.offset - float(sol["dual objective"])
    return res


BACKENDS = {"clarabel": _solve_clarabel, "cvxopt": _solve_cvxopt}

# CVXOPT is the default: its Schur-complement route copes with the large
# PSD blocks of higher levels, and Clarabel was seen to stall just short of
# 1e-8 on the degenerate first-level instances (many active 1x1 blocks).
AUTO_ORDER = ("cvxopt", "clarabel")


def choose_backend(inst: SDPInstance) -> str:
    return AUTO_ORDER[0]


def solve(inst: SDPInstance, opts: Optional[SolveOptions] = None) -> SolveResult:
    """Solve ``inst`` (a maximisation) and attach residuals."""
    opts = opts or SolveOptions()
    names = AUTO_ORDER if opts.backend == "auto" else (opts.backend,)
    for name in names:
        if name not in BACKENDS:
            raise ValueError(f"unknown backend {name!r}; choose from {sorted(BACKENDS)}")
    log.info("solving %s", inst.statistics())
    m = inst.eq_matrix.shape[0]
    red = None
    if m and (opts.eliminate == "always"
              or (opts.eliminate == "auto" and 4 * m >= inst.var_count)):
        red = eliminate_equalities(inst)
    if red is not None and not red.consistent:
        return _inconsistent_result(inst, red)
    if red is not None and red.inst.var_count == 0:
        res = _fixed_point_result(inst, red, opts.feas_tol)
        names = ()
    target = red.inst if red is not None else inst
    for name in names:
        try:
            res = BACKENDS[name](target, opts)
            if red is not None:
                res = _lift(inst, red, res)
            break
        except BackendFailure as exc:
            log.warning("backend %s failed: %s", name, exc)
            res = SolveResult(Status.INACCURATE, backend=name, backend_status=f"failure: {exc}")
    if res.x is not None and res.status in (Status.OPTIMAL, Status.INACCURATE):
        res.residuals = primal_residuals(inst, res.x)
        if res.status is Status.OPTIMAL and not (
                res.residuals["min_eig"] >= -100 * opts.feas_tol * max(1.0, res.residuals["scale"])
                and res.residuals["eq_inf"] <= 100 * opts.feas_tol * max(1.0, res.residuals["scale"])):
            res.status = Status.INACCURATE
    return res


# -------------------------------------------------------------- verification

def primal_residuals(inst: SDPInstance, x: np.ndarray) -> dict:
    min_eig = math.inf
    worst = ""
    for b in inst.blocks:
        Fx = b.matrix(x)
        ev = float(np.linalg.eigvalsh(Fx)[0]) if b.size > 1 else float(Fx[0, 0])
        if ev < min_eig:
            min_eig, worst = ev, b.label
    eq = inst.eq_matrix @ x - inst.eq_rhs
    return {"min_eig": min_eig, "min_eig_block": worst,
            "eq_inf": float(np.max(np.abs(eq))) if eq.size else 0.0,
            "scale": float(np.max(np.abs(x))) if x.size else 0.0}


@dataclass
class VerificationReport:
    passed: bool
    checks: dict = field(default_factory=dict)
    margin: Optional[float] = None
    certified: bool = False
    messages: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "certified": self.certified, "margin": self.margin,
                "checks": self.checks, "messages": self.messages}


FARKAS_MIN_MARGIN = 1e-6


def farkas_margin(inst: SDPInstance, cert: Certificate) -> dict:
    """Check a Farkas ray on the instance itself.

    The dual blocks are first projected onto the PSD cone and the ray is
    scaled to unit total trace.  ``margin`` is ``-(sum <Z_j, F_j0> + d'y)``
    and ``residual`` the sup-norm of ``sum_j <Z_j, F_jk> - (E'y)_k``.
    """
    Zp = []
    for Zk in cert.Z:
        w, V = np.linalg.eigh(0.5 * (Zk + Zk.T))
        Zp.append((V * np.clip(w, 0.0, None)) @ V.T)
    total = sum(float(np.trace(Zk)) for Zk in Zp)
    if total <= 0:
        return {"margin": -math.inf, "residual": math.inf, "trace": total}
    Zp = [Zk / total for Zk in Zp]
    y = np.asarray(cert.y, dtype=float) / total
    lhs = np.zeros(inst.var_count)
    const = 0.0
    for Zk, blk in zip(Zp, inst.blocks):
        lhs += blk.adjoint(Zk, inst.var_count)
        const += float(np.sum(Zk * blk.constant()))
    resid = lhs - inst.eq_matrix.T @ y
    const += float(inst.eq_rhs @ y)
    return {"margin": -const, "residual": float(np.max(np.abs(resid))) if resid.size else 0.0,
            "trace": total}


def verify(inst: SDPInstance, res: SolveResult, tol: float = 1e-6) -> VerificationReport:
    """Recompute feasibility, objective and certificate claims from scratch."""
    rep = VerificationReport(passed=False)
    if res.status in (Status.OPTIMAL, Status.INACCURATE) and res.x is not None:
        r = primal_residuals(inst, res.x)
        val = inst.value_at(res.x)
        rep.checks = {
            "min_eig": r["min_eig"], "min_eig_block": r["min_eig_block"],
            "eq_inf": r["eq_inf"],
            "objective_mismatch": abs(val - res.value) if res.value is not None else math.inf,
        }
        ok_psd = r["min_eig"] >= -tol
        ok_eq = r["eq_inf"] <= tol
        ok_obj = rep.checks["objective_mismatch"] <= tol
        if res.Z is not None and res.y is not None:
            dual = dual_bound(inst, res.Z, res.y)
            rep.checks.update({"dual_bound": dual["bound"], "dual_residual": dual["residual"],
                               "gap": dual["bound"] - val})
        for flag, msg in ((ok_psd, "PSD violation"), (ok_eq, "equality violation"),
                          (ok_obj, "objective mismatch")):
            if not flag:
                rep.messages.append(msg)
        rep.passed = ok_psd and ok_eq and ok_obj
    elif res.status in (Status.INFEASIBLE, Status.INACCURATE) and res.certificate is not None:
        f = farkas_margin(inst, res.certificate)
        rep.checks = f
        rep.margin = f["margin"]
        # the residual must be negligible next to the margin it would erode
        rep.certified = (f["margin"] >= FARKAS_MIN_MARGIN
                         and f["residual"] <= min(tol, 1e-3 * f["margin"]))
        rep.passed = rep.certified
        if not rep.certified:
            rep.messages.append("numerically infeasible, uncertified")
    else:
        rep.messages.append(f"nothing to verify for status {res.status.value}")
    return rep


def dual_bound(inst: SDPInstance, Z: list, y: np.ndarray) -> dict:
    """Upper bound d'y + sum <Z_j, F_j0> + offset from PSD-projected duals.

    Valid exactly when ``sum_j <Z_j, F_jk> - (E'y)_k = -c_k``; the residual
    of that identity is reported alongside.
    """
    lhs = np.zeros(inst.var_count)
    const = 0.0
    for Zk, blk in zip(Z, inst.blocks):
        w, V = np.linalg.eigh(0.5 * (Zk + Zk.T))
        Zk = (V * np.clip(w, 0.0, None)) @ V.T
        lhs += blk.adjoint(Zk, inst.var_count)
        const += float(np.sum(Zk * blk.constant()))
    resid = lhs - inst.eq_matrix.T @ y + inst.objective
    return {"bound": const + float(inst.eq_rhs @ y) + inst.offset,
            "residual": float(np.max(np.abs(resid))) if resid.size else 0.0}
