import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _instances import RandomInstance
from qbilinear.applications import (chsh, channel_to_problem, extractor_to_problem,
                                    game_to_problem, parity_fixture, z_channel)
from qbilinear.model import (AffineConstraint, BilinearProblem, DimensionMismatch,
                             FamilyViolation, ModelError, ScalarPoint, Sense,
                             UnboundedVariable, evaluate, is_feasible, materialize_box,
                             problem_from_dict, problem_to_dict, validate)


def _row(*vals, sense=Sense.NONNEG):
    return AffineConstraint(np.array(vals, dtype=float), sense)


def unit_box_1x1():
    G = [_row(0, 1, 0), _row(1, -1, 0)]
    K = [_row(0, 0, 1), _row(1, 0, -1)]
    return BilinearProblem([[1.0]], G, K)


def test_evaluate_examples():
    p = unit_box_1x1()
    assert evaluate(p, ScalarPoint([2.0], [3.0])) == 6.0
    q = BilinearProblem([[0.0]], p.G, p.K, c=5.0)
    assert evaluate(q, ScalarPoint([0.3], [0.9])) == 5.0


def test_evaluate_chsh_deterministic():
    p = game_to_problem(chsh())
    # both players always answer 0
    pt = ScalarPoint([1, 0, 1, 0], [1, 0, 1, 0])
    assert evaluate(p, pt) == pytest.approx(0.75, abs=1e-15)


def test_evaluate_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        evaluate(unit_box_1x1(), ScalarPoint([1.0, 2.0], [1.0]))


@given(st.floats(-3, 3), st.floats(-1, 1), st.floats(-1, 1))
def test_evaluate_bilinear(lam, z, y):
    p = unit_box_1x1()
    assert evaluate(p, ScalarPoint([lam * z], [y])) == pytest.approx(
        lam * evaluate(p, ScalarPoint([z], [y])), abs=1e-12)


def test_is_feasible_channel():
    c = z_channel()
    p = channel_to_problem(c)
    uni = ScalarPoint(np.full(8, 0.25), np.full(12, 0.5))
    assert is_feasible(p, uni, 1e-12)
    bad = ScalarPoint(np.r_[2.0, np.zeros(7)], np.full(12, 0.5))
    assert not is_feasible(p, bad, 1e-9)
    edge = ScalarPoint(np.r_[1, 0, 0, 0, 1, 0, 0, 0], np.r_[np.ones(6), np.zeros(6)])
    assert is_feasible(p, edge, 0.0)


def test_validate_accepts_applications():
    for p in (game_to_problem(chsh()), channel_to_problem(z_channel()),
              extractor_to_problem(parity_fixture())):
        assert validate(p).ok


def test_validate_free_variable():
    rep = validate(BilinearProblem([[1.0]], [], []))
    assert not rep.ok
    assert rep.unbounded == [1, 2]
    with pytest.raises(UnboundedVariable):
        rep.raise_if_failed()


def test_validate_family_violation():
    p = unit_box_1x1()
    mixed = _row(0, 1, 1)
    rep = validate(BilinearProblem(p.A, p.G + (mixed,), p.K))
    assert rep.family_violations == ["G[2]"]
    with pytest.raises(FamilyViolation):
        rep.raise_if_failed()


def test_validate_bound_too_small():
    p = unit_box_1x1()
    q = BilinearProblem(p.A, p.G, p.K, bound_C=0.5)
    assert not validate(q).ok


def test_constraint_dimension_checked():
    with pytest.raises(DimensionMismatch):
        BilinearProblem([[1.0]], [_row(0, 1)], [])


def test_materialize_adds_upper_bounds():
    # z1 + z2 = 1, z >= 0 and a box on y: the bounds z_i <= 1 are implied only
    G = [_row(-1, 1, 1, 0, sense=Sense.ZERO), _row(0, 1, 0, 0), _row(0, 0, 1, 0)]
    K = [_row(0, 0, 0, 1), _row(1, 0, 0, -1)]
    p = BilinearProblem([[1.0], [0.5]], G, K)
    assert validate(p).ok
    q = materialize_box(p)
    added = [f for f in q.constraints if f.label.startswith("ub")]
    assert [f.coeffs.tolist() for f in added] == [[1, -1, 0, 0], [1, 0, -1, 0]]
    assert materialize_box(q).constraints == q.constraints


def test_json_round_trip():
    p = channel_to_problem(z_channel())
    q = problem_from_dict(problem_to_dict(p))
    assert np.array_equal(p.A, q.A)
    assert [f.coeffs.tolist() for f in p.constraints] == [f.coeffs.tolist() for f in q.constraints]


def test_json_rational_and_errors():
    d = {"N": 1, "M": 1, "A": [["1/3"]],
         "G": [{"coeffs": [0, 1, 0]}, {"coeffs": [1, -1, 0]}],
         "K": [{"coeffs": [0, 0, 1]}, {"coeffs": [1, 0, -1]}]}
    assert problem_from_dict(d).A[0, 0] == pytest.approx(1 / 3, abs=1e-16)
    d["G"][1]["coeffs"] = [1, "x", 0]
    with pytest.raises(ModelError, match=r"problem\.G\[1\]\.coeffs\[1\]"):
        problem_from_dict(d)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_feasible_points_respect_bound(seed):
    inst = RandomInstance(seed)
    p = inst.problem
    assert validate(p).ok
    for pt in inst.points(5):
        assert is_feasible(p, pt, 1e-12)
        assert np.all(np.abs(pt.x) <= p.bound_C + 1e-12)
