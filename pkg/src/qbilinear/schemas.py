"""JSON loaders for the command-line front-ends.

Every loader raises :class:`~qbilinear.model.ModelError` with a dotted path
to the offending field, e.g. ``channel.W[2][1]: cannot parse 'x' as a number``.
Rational entries may be given as strings (``"1/3"``).
"""
from __future__ import annotations

import json
from fractions import Fraction

import numpy as np

from .applications.channel import Channel
from .applications.common import as_fraction
from .applications.extractor import Extractor
from .applications.games import Game
from .hierarchy import CSPlusQuery, MomentEquality
from .model import ModelError, _parse_number, parse_matrix, problem_from_dict
from .words import RewriteRules


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: "
                         f"{exc.msg}") from exc


def _int(d: dict, key: str, where: str, lo: int = 0) -> int:
    if key not in d:
        raise ModelError(f"{where}.{key}: missing")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ModelError(f"{where}.{key}: expected an integer >= {lo}")
    return v


def _obj(d, where):
    if not isinstance(d, dict):
        raise ModelError(f"{where}: expected a JSON object")
    return d


def load_game(d: dict) -> Game:
    """``{"Q1", "Q2", "A1", "A2", "pi", "V"}``.

    ``V`` is either a dense nested list indexed ``[a1][a2][q1][q2]`` or
    ``{"wins": [[a1, a2, q1, q2], ...]}`` listing the winning tuples.
    """
    _obj(d, "game")
    Q1, Q2 = _int(d, "Q1", "game", 1), _int(d, "Q2", "game", 1)
    A1, A2 = _int(d, "A1", "game", 1), _int(d, "A2", "game", 1)
    if "pi" not in d:
        raise ModelError("game.pi: missing")
    pi = parse_matrix(d["pi"], (Q1, Q2), "game.pi")
    if "V" not in d:
        raise ModelError("game.V: missing")
    V = np.zeros((A1, A2, Q1, Q2))
    raw = d["V"]
    if isinstance(raw, dict):
        wins = raw.get("wins")
        if not isinstance(wins, list):
            raise ModelError("game.V.wins: expected a list of [a1, a2, q1, q2]")
        for t, w in enumerate(wins):
            if not (isinstance(w, list) and len(w) == 4
                    and all(isinstance(v, int) for v in w)
                    and all(0 <= v < s for v, s in zip(w, V.shape))):
                raise ModelError(f"game.V.wins[{t}]: expected an in-range [a1, a2, q1, q2]")
            V[tuple(w)] = 1.0
    else:
        try:
            arr = np.array(raw, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ModelError(f"game.V: expected a nested list of 0/1 values ({exc})") from None
        if arr.shape != V.shape:
            raise ModelError(f"game.V: expected shape [A1][A2][Q1][Q2] = {list(V.shape)}, "
                             f"got {list(arr.shape)}")
        V = arr
    try:
        return Game(pi, V, d.get("name", ""))
    except ModelError as exc:
        raise ModelError(f"game: {exc}") from None


def load_channel(d: dict) -> Channel:
    """``{"W": rows indexed [y][x] or {"shape": [Y, X], "triplets": [[y, x, v]]}, "k"}``."""
    _obj(d, "channel")
    k = _int(d, "k", "channel", 1) if "k" in d else 1
    if "W" not in d:
        raise ModelError("channel.W: missing")
    raw = d["W"]
    if isinstance(raw, dict):
        shape = raw.get("shape")
        if not (isinstance(shape, list) and len(shape) == 2
                and all(isinstance(s, int) and s > 0 for s in shape)):
            raise ModelError("channel.W.shape: expected [Y, X]")
        rows = [[Fraction(0)] * shape[1] for _ in range(shape[0])]
        dense = parse_matrix({"triplets": raw.get("triplets", [])}, tuple(shape), "channel.W")
        for t, (y, x, v) in enumerate(raw.get("triplets", [])):
            rows[y][x] = _exact(v, f"channel.W.triplets[{t}]")
        if any(isinstance(v, float) for r in rows for v in r):
            rows = dense.tolist()
    else:
        if not isinstance(raw, list) or not raw:
            raise ModelError("channel.W: expected a non-empty list of rows")
        X = len(raw[0]) if isinstance(raw[0], list) else 0
        parse_matrix(raw, (len(raw), X), "channel.W")
        rows = [[_exact(v, f"channel.W[{i}][{j}]") for j, v in enumerate(r)]
                for i, r in enumerate(raw)]
    try:
        return Channel.from_entries(rows, k, d.get("name", ""))
    except ModelError as exc:
        raise ModelError(f"channel.W: {exc}") from None


def _exact(v, where):
    """Keep integers, fraction strings and decimals exact; leave floats alone."""
    _parse_number(v, where)
    if isinstance(v, float):
        return v
    return as_fraction(v)


def load_extractor(d: dict) -> Extractor:
    """``{"n", "d", "m", "table": [[f_s(i) for i] for s], "k"}``."""
    _obj(d, "extractor")
    n, dd, m = (_int(d, key, "extractor") for key in ("n", "d", "m"))
    table = d.get("table")
    if not isinstance(table, list) or len(table) != 2 ** dd:
        raise ModelError(f"extractor.table: expected {2 ** dd} rows (one per seed)")
    for s, row in enumerate(table):
        if not isinstance(row, list) or len(row) != 2 ** n:
            raise ModelError(f"extractor.table[{s}]: expected {2 ** n} entries")
        for i, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, int) or not 0 <= v < 2 ** m:
                raise ModelError(f"extractor.table[{s}][{i}]: expected an integer in [0, {2 ** m})")
    k = _parse_number(d.get("k", n), "extractor.k")
    try:
        return Extractor(n, dd, m, table, k, d.get("name", ""))
    except ModelError as exc:
        raise ModelError(f"extractor: {exc}") from None


def load_csplus(d: dict) -> CSPlusQuery:
    """``{"K": matrix}`` or ``{"A": matrix, "constraints": [{"F": matrix, "G": v}], "bound": C}``."""
    _obj(d, "csplus")
    if "K" in d:
        raw = d["K"]
        size = len(raw) if isinstance(raw, list) else 0
        K = parse_matrix(raw, (size, size), "csplus.K")
        if not np.allclose(K, K.T, atol=1e-12):
            raise ModelError("csplus.K: matrix is not symmetric")
        return CSPlusQuery(size, target=K)
    if "A" not in d:
        raise ModelError("csplus: need either 'K' or 'A'")
    raw = d["A"]
    size = len(raw) if isinstance(raw, list) else 0
    A = parse_matrix(raw, (size, size), "csplus.A")
    eqs = []
    cons = d.get("constraints", [])
    if not isinstance(cons, list):
        raise ModelError("csplus.constraints: expected a list")
    for t, c in enumerate(cons):
        where = f"csplus.constraints[{t}]"
        _obj(c, where)
        if "F" not in c:
            raise ModelError(f"{where}.F: missing")
        F = parse_matrix(c["F"], (size, size), f"{where}.F")
        eqs.append(MomentEquality(F, _parse_number(c.get("G", 0), f"{where}.G")))
    bound = d.get("bound")
    bound = None if bound is None else _parse_number(bound, "csplus.bound")
    return CSPlusQuery(size, A=A, equalities=eqs, bound=bound)


def load_problem(d: dict):
    """Generic problem plus optional ``"rules": [[symbol, ...], ...]`` (1-based)."""
    _obj(d, "problem")
    p = problem_from_dict(d)
    rules = None
    if d.get("rules"):
        groups = d["rules"]
        if not isinstance(groups, list):
            raise ModelError("problem.rules: expected a list of symbol groups")
        for g, grp in enumerate(groups):
            if not (isinstance(grp, list) and all(isinstance(s, int) and 1 <= s <= p.N + p.M
                                                  for s in grp)):
                raise ModelError(f"problem.rules[{g}]: expected symbols in 1..{p.N + p.M}")
        try:
            rules = RewriteRules(tuple(tuple(g) for g in groups))
        except ValueError as exc:
            raise ModelError(f"problem.rules: {exc}") from None
    return p, rules
