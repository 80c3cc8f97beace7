"""SDPA sparse text export and import.

The file describes the SDPA primal

    minimize    sum_k c_k x_k
    subject to  sum_k F_k x_k - F_0  PSD (block diagonal)

An instance ``maximize c'x + offset  s.t.  G_j0 + sum_k x_k G_jk PSD,
E x = d`` is written with ``c_sdpa = -c`` and ``F_0 = -G_0``.  Equalities
become one trailing diagonal (LP) block of size ``2m`` holding ``E x - d``
and ``d - E x``.  Two header comments carry what the format has no room
for; they are written only when non-trivial:

    * offset <float>
    * equalities <m>

Floats are written with ``repr`` so a round trip is exact.  See
``docs/formats.md`` for a byte-level description.
"""
from __future__ import annotations

import os
from collections import defaultdict

import numpy as np
import scipy.sparse as sp

from .sdp import PSDBlock, SDPInstance


class IOFailure(OSError):
    pass


class SDPAParseError(ValueError):
    pass


def _num(v: float) -> str:
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_sdpa_text(inst: SDPInstance) -> str:
    m = inst.eq_matrix.shape[0]
    sizes = [blk.size for blk in inst.blocks]
    if m:
        sizes.append(-2 * m)
    lines = []
    if inst.offset:
        lines.append(f"* offset {_num(inst.offset)}")
    if m:
        lines.append(f"* equalities {m}")
    lines.append(str(inst.var_count))
    lines.append(str(len(sizes)))
    lines.append(" ".join(str(s) for s in sizes))
    lines.append(" ".join(_num(-v) if v else "0" for v in inst.objective))

    entries = []
    for b, blk in enumerate(inst.blocks, start=1):
        keys, vals = blk.canonical_terms()
        for (i, j, k), v in zip(keys.T, vals):
            mat = 0 if k < 0 else int(k) + 1
            # constant terms flip sign: F_0 = -G_0
            entries.append((mat, b, int(i) + 1, int(j) + 1, -v if mat == 0 else v))
    if m:
        b = len(inst.blocks) + 1
        E = inst.eq_matrix.tocoo()
        for r, k, v in zip(E.row, E.col, E.data):
            if v != 0:
                entries.append((int(k) + 1, b, int(r) + 1, int(r) + 1, float(v)))
                entries.append((int(k) + 1, b, m + int(r) + 1, m + int(r) + 1, -float(v)))
        for r, v in enumerate(inst.eq_rhs):
            if v != 0:
                entries.append((0, b, r + 1, r + 1, float(v)))
                entries.append((0, b, m + r + 1, m + r + 1, -float(v)))
    entries.sort(key=lambda e: e[:4])
    lines.extend(f"{a} {b} {i} {j} {_num(v)}" for a, b, i, j, v in entries)
    return "\n".join(lines) + "\n"


def export_standard(inst: SDPInstance, path) -> None:
    """Write ``inst`` to ``path`` in SDPA sparse format."""
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(to_sdpa_text(inst))
    except OSError as exc:
        raise IOFailure(f"cannot write {os.fspath(path)}: {exc}") from exc


def _tokens(line: str) -> list[str]:
    for ch in ",{}()":
        line = line.replace(ch, " ")
    return line.split()


def from_sdpa_text(text: str) -> SDPInstance:
    offset, m = 0.0, 0
    body = []
    for raw in text.splitlines():
        s = raw.strip()
        if not s:
            continue
        if s[0] in '*"':
            parts = s[1:].split()
            if len(parts) == 2 and parts[0] == "offset":
                offset = float(parts[1])
            elif len(parts) == 2 and parts[0] == "equalities":
                m = int(parts[1])
            continue
        body.append(s)
    if len(body) < 4:
        raise SDPAParseError("truncated header")
    try:
        n = int(_tokens(body[0])[0])
        nb = int(_tokens(body[1])[0])
        sizes = [int(float(t)) for t in _tokens(body[2])[:nb]]
        c = np.array([float(t) for t in _tokens(body[3])[:n]])
    except (ValueError, IndexError) as exc:
        raise SDPAParseError(f"bad header: {exc}") from exc
    if len(sizes) != nb or c.size != n:
        raise SDPAParseError("header sizes do not match")
    if m and sizes[-1] != -2 * m:
        raise SDPAParseError("equality block does not match the header comment")

    terms = defaultdict(list)
    for ln, s in enumerate(body[4:], start=5):
        t = _tokens(s)
        if len(t) < 5:
            raise SDPAParseError(f"line {ln}: expected 5 fields")
        try:
            mat, b, i, j, v = int(t[0]), int(t[1]), int(t[2]), int(t[3]), float(t[4])
        except ValueError as exc:
            raise SDPAParseError(f"line {ln}: {exc}") from exc
        if not (0 <= mat <= n and 1 <= b <= nb):
            raise SDPAParseError(f"line {ln}: index out of range")
        if i > j:
            i, j = j, i
        terms[b].append((mat, i - 1, j - 1, v))

    n_psd = nb - 1 if m else nb
    blocks = []
    for b in range(1, n_psd + 1):
        size = sizes[b - 1]
        if size > 0:
            rows, cols, vars_, vals = [], [], [], []
            for mat, i, j, v in terms[b]:
                rows.append(i)
                cols.append(j)
                vars_.append(mat - 1)
                vals.append(-v if mat == 0 else v)
            blocks.append(PSDBlock(size, rows, cols, vars_, vals))
        else:
            # a foreign diagonal block: one scalar block per entry
            diag = defaultdict(list)
            for mat, i, j, v in terms[b]:
                diag[i].append((mat, v))
            for i in range(-size):
                items = diag.get(i, [])
                blocks.append(PSDBlock(1, [0] * len(items), [0] * len(items),
                                       [mat - 1 for mat, _ in items],
                                       [-v if mat == 0 else v for mat, v in items]))
    er, ec, ev = [], [], []
    d = np.zeros(m)
    if m:
        for mat, i, j, v in terms[nb]:
            if i >= m:
                continue  # mirrored half
            if mat == 0:
                d[i] = v
            else:
                er.append(i)
                ec.append(mat - 1)
                ev.append(v)
    E = sp.csr_matrix((ev, (er, ec)), shape=(m, n))
    return SDPInstance(n, -c + 0.0, blocks, E, d, offset, [], {"source": "sdpa"})


def import_standard(path) -> SDPInstance:
    try:
        with open(path, encoding="ascii") as fh:
            text = fh.read()
    except OSError as exc:
        raise IOFailure(f"cannot read {os.fspath(path)}: {exc}") from exc
    return from_sdpa_text(text)


def same_structure(a: SDPInstance, b: SDPInstance) -> bool:
    """Equality of the mathematical content (labels and metadata ignored)."""
    if a.var_count != b.var_count or len(a.blocks) != len(b.blocks):
        return False
    if not np.array_equal(a.objective, b.objective) or a.offset != b.offset:
        return False
    for x, y in zip(a.blocks, b.blocks):
        if x.size != y.size:
            return False
        kx, vx = x.canonical_terms()
        ky, vy = y.canonical_terms()
        if not (np.array_equal(kx, ky) and np.array_equal(vx, vy)):
            return False
    Ea, Eb = a.eq_matrix.tocsr(), b.eq_matrix.tocsr()
    if Ea.shape != Eb.shape or (Ea != Eb).nnz:
        return False
    return np.array_equal(a.eq_rhs, b.eq_rhs)
