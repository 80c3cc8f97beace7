import numpy as np
import pytest
import scipy.sparse as sp

from qbilinear.sdp import (BlockBuilder, Certificate, SDPInstance, SolveOptions, SolveResult,
                           Status, dual_bound, eliminate_equalities, farkas_margin, solve,
                           verify)


def scalar_instance(rows, n_vars=1, c=(1.0,), E=None, d=None):
    """Blocks given as lists of (const, {var: coef}) 1x1 entries."""
    blocks = []
    for k, (const, lin) in enumerate(rows):
        bb = BlockBuilder(1, f"r{k}")
        if const:
            bb.add(0, 0, -1, const)
        for v, coef in lin.items():
            bb.add(0, 0, v, coef)
        blocks.append(bb.build())
    if E is None:
        E, d = sp.csr_matrix((0, n_vars)), np.zeros(0)
    return SDPInstance(n_vars, np.array(c, dtype=float), blocks, E, np.asarray(d, float))


@pytest.mark.parametrize("backend", ["cvxopt", "clarabel"])
def test_interval(backend):
    inst = scalar_instance([(0.0, {0: 1.0}), (1.0, {0: -1.0})])
    res = solve(inst, SolveOptions(backend=backend))
    assert res.status is Status.OPTIMAL
    assert res.value == pytest.approx(1.0, abs=1e-7)
    assert verify(inst, res).passed


@pytest.mark.parametrize("backend", ["cvxopt", "clarabel"])
def test_infeasible_has_certificate(backend):
    # -1 - x >= 0 and x >= 0
    inst = scalar_instance([(-1.0, {0: -1.0}), (0.0, {0: 1.0})])
    res = solve(inst, SolveOptions(backend=backend))
    assert res.status is Status.INFEASIBLE
    rep = verify(inst, res)
    assert rep.certified
    assert rep.margin >= 1e-6


def test_unbounded():
    inst = scalar_instance([(0.0, {0: 1.0})])
    res = solve(inst)
    assert res.status is Status.UNBOUNDED
    assert res.value == np.inf


def test_tampered_primal_flagged():
    inst = scalar_instance([(0.0, {0: 1.0}), (1.0, {0: -1.0})])
    res = solve(inst)
    bad = SolveResult(res.status, res.value, res.x + 1.0)
    rep = verify(inst, bad)
    assert not rep.passed
    assert "PSD violation" in rep.messages


def test_matrix_block_and_equalities():
    # maximize x01 over [[1, x01], [x01, x11]] PSD with x11 = 1
    bb = BlockBuilder(2, "m")
    bb.add(0, 0, -1, 1.0)
    bb.add(0, 1, 0, 1.0)
    bb.add(1, 1, 1, 1.0)
    E = sp.csr_matrix(np.array([[0.0, 1.0]]))
    inst = SDPInstance(2, np.array([1.0, 0.0]), [bb.build()], E, np.array([1.0]))
    for elim in ("always", "never"):
        res = solve(inst, SolveOptions(eliminate=elim))
        assert res.value == pytest.approx(1.0, abs=1e-7)
        rep = verify(inst, res)
        assert rep.passed
        assert rep.checks["gap"] == pytest.approx(0.0, abs=1e-6)


def test_inconsistent_equalities():
    E = sp.csr_matrix(np.array([[1.0], [1.0]]))
    inst = scalar_instance([(1.0, {0: -1.0})], E=E, d=[0.0, 1.0])
    res = solve(inst, SolveOptions(eliminate="always"))
    assert res.status is Status.INFEASIBLE


def test_elimination_null_space():
    rng = np.random.default_rng(3)
    E = sp.csr_matrix(rng.normal(size=(3, 6)))
    d = rng.normal(size=3)
    inst = scalar_instance([(1.0, {k: 0.1 for k in range(6)})], n_vars=6, c=np.ones(6), E=E, d=d)
    for method in ("pivot", "spectral"):
        red = eliminate_equalities(inst, method=method)
        assert red.consistent
        assert red.B.shape == (6, 3)
        assert np.allclose(E @ red.x0, d)
        EB = E @ red.B
        assert np.allclose(EB.toarray() if sp.issparse(EB) else EB, 0, atol=1e-10)
        # dual lift: E'y = v for v in the row space
        v = E.T @ rng.normal(size=3)
        assert np.allclose(E.T @ red.lift_y(v), v)


def test_farkas_margin_scale_free():
    inst = scalar_instance([(-1.0, {0: -1.0}), (0.0, {0: 1.0})])
    cert = Certificate([np.array([[1.0]]), np.array([[1.0]])], np.zeros(0))
    f1 = farkas_margin(inst, cert)
    cert2 = Certificate([np.array([[7.0]]), np.array([[7.0]])], np.zeros(0))
    assert farkas_margin(inst, cert2)["margin"] == pytest.approx(f1["margin"])
    assert f1["margin"] == pytest.approx(0.5)
    assert f1["residual"] == 0.0


def test_dual_bound_is_upper_bound():
    inst = scalar_instance([(0.0, {0: 1.0}), (1.0, {0: -1.0})])
    res = solve(inst)
    db = dual_bound(inst, res.Z, res.y)
    assert db["bound"] >= res.value - 1e-7
    assert db["residual"] <= 1e-7


def test_options_validated():
    with pytest.raises(ValueError):
        SolveOptions(feas_tol=0)
    with pytest.raises(ValueError):
        SolveOptions(eliminate="sometimes")
