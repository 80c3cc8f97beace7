"""Bilinear programs over two families of variables with affine constraints."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np


class Sense(enum.Enum):
    NONNEG = "nonneg"
    ZERO = "zero"


class Family(enum.Enum):
    Z = "z"
    Y = "y"
    MIXED = "mixed"


class ModelError(ValueError):
    pass


class DimensionMismatch(ModelError):
    pass


class UnboundedVariable(ModelError):
    def __init__(self, indices):
        self.indices = list(indices)
        super().__init__(f"no box/simplex bound for variables {self.indices}")


class FamilyViolation(ModelError):
    def __init__(self, which):
        self.which = list(which)
        super().__init__(f"constraints mix z and y variables: {self.which}")


@dataclass(frozen=True)
class AffineConstraint:
    """``coeffs[0] + sum_i coeffs[i] x_i`` compared against zero.

    ``coeffs`` has length ``N + M + 1``; position 0 multiplies the constant.
    """

    coeffs: np.ndarray
    sense: Sense = Sense.NONNEG
    label: str = ""

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def family(self, N: int) -> Family:
        z = np.any(self.coeffs[1:N + 1] != 0)
        y = np.any(self.coeffs[N + 1:] != 0)
        if z and y:
            return Family.MIXED
        return Family.Y if y else Family.Z

    def value(self, x: np.ndarray) -> float:
        return float(self.coeffs[0] + self.coeffs[1:] @ x)

    def support(self) -> dict[int, float]:
        return {i: float(v) for i, v in enumerate(self.coeffs) if v != 0}


@dataclass(frozen=True)
class ScalarPoint:
    z: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(y))):
            raise ValueError("scalar point has non-finite entries")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "y", y)

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.z, self.y])


@dataclass(frozen=True)
class BilinearProblem:
    """maximize z'Ay + a'z + b'y + c subject to g(z) >= 0 (or = 0), k(y) >= 0 (or = 0).

    The constant constraint ``1 >= 0`` is implicit and never stored.
    """

    A: np.ndarray
    G: tuple = ()
    K: tuple = ()
    a: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    c: float = 0.0
    bound_C: float = 1.0
    name: str = ""

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        N, M = A.shape
        a = np.zeros(N) if self.a is None else np.asarray(self.a, dtype=float).ravel()
        b = np.zeros(M) if self.b is None else np.asarray(self.b, dtype=float).ravel()
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "G", tuple(self.G))
        object.__setattr__(self, "K", tuple(self.K))
        if a.shape != (N,) or b.shape != (M,):
            raise DimensionMismatch("linear objective terms do not match A")
        for f in self.G + self.K:
            if f.coeffs.shape != (N + M + 1,):
                raise DimensionMismatch(
                    f"constraint {f.label!r} has {f.coeffs.size} coefficients, "
                    f"expected {N + M + 1}")
        if not self.bound_C > 0:
            raise ModelError("bound_C must be positive")

    @property
    def N(self) -> int:
        return self.A.shape[0]

    @property
    def M(self) -> int:
        return self.A.shape[1]

    @property
    def constraints(self) -> tuple:
        return self.G + self.K

    def nonneg_constraints(self) -> list[AffineConstraint]:
        return [f for f in self.constraints if f.sense is Sense.NONNEG]

    def zero_constraints(self) -> list[AffineConstraint]:
        return [f for f in self.constraints if f.sense is Sense.ZERO]

    def with_objective(self, A, a=None, b=None, c=0.0) -> "BilinearProblem":
        return BilinearProblem(A, self.G, self.K, a, b, c, self.bound_C, self.name)


def constant_constraint(n_vars: int) -> AffineConstraint:
    c = np.zeros(n_vars + 1)
    c[0] = 1.0
    return AffineConstraint(c, Sense.NONNEG, "1")


def _check_point(p: BilinearProblem, pt: ScalarPoint):
    if pt.z.shape != (p.N,) or pt.y.shape != (p.M,):
        raise DimensionMismatch(
            f"point has shape ({pt.z.size}, {pt.y.size}), problem is ({p.N}, {p.M})")


def evaluate(p: BilinearProblem, pt: ScalarPoint) -> float:
    _check_point(p, pt)
    return float(pt.z @ p.A @ pt.y + p.a @ pt.z + p.b @ pt.y + p.c)


def is_feasible(p: BilinearProblem, pt: ScalarPoint, tol: float = 0.0) -> bool:
    if tol < 0:
        raise ValueError("tol must be non-negative")
    _check_point(p, pt)
    x = pt.x
    for f in p.constraints:
        v = f.value(x)
        if f.sense is Sense.NONNEG and v < -tol:
            return False
        if f.sense is Sense.ZERO and abs(v) > tol:
            return False
    return True


@dataclass
class ValidationReport:
    ok: bool
    unbounded: list = field(default_factory=list)
    family_violations: list = field(default_factory=list)
    messages: list = field(default_factory=list)

    def raise_if_failed(self):
        if self.family_violations:
            raise FamilyViolation(self.family_violations)
        if self.unbounded:
            raise UnboundedVariable(self.unbounded)


def _bounds_from_constraints(constraints: Sequence[AffineConstraint], idx: Sequence[int]):
    """Read syntactic lower/upper bounds for the variables in ``idx``.

    Recognises ``c0 + c x >= 0`` single-variable boxes and equalities
    ``sum c_i x_i = r`` with positive coefficients over non-negative
    variables, which give ``x_i <= r / c_i``.
    """
    lo = {i: -np.inf for i in idx}
    hi = {i: np.inf for i in idx}
    for f in constraints:
        supp = {i: v for i, v in f.support().items() if i != 0}
        if len(supp) == 1:
            (i, v), = supp.items()
            if i not in lo:
                continue
            bound = -f.coeffs[0] / v
            if f.sense is Sense.ZERO:
                lo[i] = max(lo[i], bound)
                hi[i] = min(hi[i], bound)
            elif v > 0:
                lo[i] = max(lo[i], bound)
            else:
                hi[i] = min(hi[i], bound)
    for f in constraints:
        if f.sense is not Sense.ZERO:
            continue
        supp = {i: v for i, v in f.support().items() if i != 0}
        if len(supp) < 2 or not all(i in lo for i in supp):
            continue
        rhs = -f.coeffs[0]
        coefs = np.array(list(supp.values()))
        if np.all(coefs > 0) and all(lo[i] >= 0 for i in supp) and rhs >= 0:
            for i, v in supp.items():
                hi[i] = min(hi[i], rhs / v)
        elif np.all(coefs < 0) and all(lo[i] >= 0 for i in supp) and rhs <= 0:
            for i, v in supp.items():
                hi[i] = min(hi[i], rhs / v)
    return lo, hi


def validate(p: BilinearProblem) -> ValidationReport:
    """Check family separation and syntactic boundedness by ``bound_C``."""
    N, M = p.N, p.M
    report = ValidationReport(ok=True)
    for where, fam, cons in (("G", Family.Z, p.G), ("K", Family.Y, p.K)):
        for j, f in enumerate(cons):
            got = f.family(N)
            if got is Family.MIXED or (got is not fam and np.any(f.coeffs[1:] != 0)):
                report.family_violations.append(f"{where}[{j}]")
    idx = list(range(1, N + M + 1))
    lo, hi = _bounds_from_constraints(p.constraints, idx)
    tol = 1e-12 * max(1.0, p.bound_C)
    for i in idx:
        if not (lo[i] >= -p.bound_C - tol and hi[i] <= p.bound_C + tol):
            report.unbounded.append(i)
    if report.family_violations:
        report.messages.append(f"family violations: {report.family_violations}")
    if report.unbounded:
        report.messages.append(f"unbounded variables: {report.unbounded}")
    report.ok = not (report.unbounded or report.family_violations)
    return report


def materialize_box(p: BilinearProblem) -> BilinearProblem:
    """Add explicit ``upper - x >= 0`` rows implied by simplex equalities."""
    N, M = p.N, p.M
    idx = list(range(1, N + M + 1))
    lo, hi = _bounds_from_constraints(p.constraints, idx)
    explicit_hi = set()
    for f in p.constraints:
        supp = {i: v for i, v in f.support().items() if i != 0}
        if f.sense is Sense.NONNEG and len(supp) == 1:
            (i, v), = supp.items()
            if v < 0:
                explicit_hi.add(i)
    G, K = list(p.G), list(p.K)
    for i in idx:
        if i in explicit_hi or not np.isfinite(hi[i]):
            continue
        c = np.zeros(N + M + 1)
        c[0], c[i] = hi[i], -1.0
        f = AffineConstraint(c, Sense.NONNEG, f"ub[{i}]")
        (G if i <= N else K).append(f)
    return BilinearProblem(p.A, G, K, p.a, p.b, p.c, p.bound_C, p.name)


# ---------------------------------------------------------------- JSON schema

def _parse_number(v, where: str) -> float:
    if isinstance(v, bool):
        raise ModelError(f"{where}: expected a number, got a boolean")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        try:
            return float(Fraction(v))
        except (ValueError, ZeroDivisionError) as exc:
            raise ModelError(f"{where}: cannot parse {v!r} as a number") from exc
    raise ModelError(f"{where}: expected a number, got {type(v).__name__}")


def parse_matrix(obj, shape, where: str) -> np.ndarray:
    """Dense nested list or ``{"triplets": [[i, j, v], ...]}`` (0-based)."""
    out = np.zeros(shape)
    if isinstance(obj, dict):
        trip = obj.get("triplets")
        if trip is None:
            raise ModelError(f"{where}: sparse matrices need a 'triplets' field")
        for t, entry in enumerate(trip):
            if not (isinstance(entry, (list, tuple)) and len(entry) == 3):
                raise ModelError(f"{where}.triplets[{t}]: expected [i, j, value]")
            i, j, v = entry
            if not (isinstance(i, int) and isinstance(j, int)
                    and 0 <= i < shape[0] and 0 <= j < shape[1]):
                raise ModelError(f"{where}.triplets[{t}]: index out of range")
            out[i, j] += _parse_number(v, f"{where}.triplets[{t}]")
        return out
    if not isinstance(obj, list) or len(obj) != shape[0]:
        raise ModelError(f"{where}: expected {shape[0]} rows")
    for i, row in enumerate(obj):
        if not isinstance(row, list) or len(row) != shape[1]:
            raise ModelError(f"{where}[{i}]: expected {shape[1]} columns")
        for j, v in enumerate(row):
            out[i, j] = _parse_number(v, f"{where}[{i}][{j}]")
    return out


def parse_vector(obj, n: int, where: str) -> np.ndarray:
    if not isinstance(obj, list) or len(obj) != n:
        raise ModelError(f"{where}: expected a list of {n} numbers")
    return np.array([_parse_number(v, f"{where}[{i}]") for i, v in enumerate(obj)])


def problem_from_dict(d: dict) -> BilinearProblem:
    """Build a problem from the JSON schema documented in ``docs/formats.md``."""
    if not isinstance(d, dict):
        raise ModelError("problem: expected a JSON object")
    for key in ("N", "M", "A"):
        if key not in d:
            raise ModelError(f"problem.{key}: missing")
    N, M = d["N"], d["M"]
    if not (isinstance(N, int) and isinstance(M, int) and N >= 0 and M >= 0 and N + M > 0):
        raise ModelError("problem.N/M: expected non-negative integers")
    A = parse_matrix(d["A"], (N, M), "problem.A")
    a = parse_vector(d["a"], N, "problem.a") if "a" in d else None
    b = parse_vector(d["b"], M, "problem.b") if "b" in d else None
    c = _parse_number(d.get("c", 0), "problem.c")
    cons = {}
    for key in ("G", "K"):
        rows = d.get(key, [])
        if not isinstance(rows, list):
            raise ModelError(f"problem.{key}: expected a list")
        parsed = []
        for j, row in enumerate(rows):
            where = f"problem.{key}[{j}]"
            if not isinstance(row, dict) or "coeffs" not in row:
                raise ModelError(f"{where}.coeffs: missing")
            coeffs = parse_vector(row["coeffs"], N + M + 1, f"{where}.coeffs")
            sense = row.get("sense", "nonneg")
            try:
                sense = Sense(sense)
            except ValueError:
                raise ModelError(f"{where}.sense: expected 'nonneg' or 'zero'") from None
            parsed.append(AffineConstraint(coeffs, sense, row.get("label", f"{key}{j}")))
        cons[key] = parsed
    bound = _parse_number(d.get("bound_C", 1.0), "problem.bound_C")
    return BilinearProblem(A, cons["G"], cons["K"], a, b, c, bound, d.get("name", ""))


def problem_to_dict(p: BilinearProblem) -> dict:
    def rows(cons):
        return [{"coeffs": f.coeffs.tolist(), "sense": f.sense.value, "label": f.label}
                for f in cons]
    return {"N": p.N, "M": p.M, "A": p.A.tolist(), "a": p.a.tolist(), "b": p.b.tolist(),
            "c": p.c, "G": rows(p.G), "K": rows(p.K), "bound_C": p.bound_C,
            "name": p.name}
