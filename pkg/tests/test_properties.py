"""Invariants of the hierarchies on random small problems and the built-in applications."""
import functools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _instances import RandomInstance
from qbilinear.applications import (Variant, channel_classical_value, channel_rules,
                                    channel_to_problem, chsh, evaluate_protocol,
                                    extractor_classical_err, extractor_sdp_value,
                                    extractor_to_problem, four_dim_protocol, game_classical_value,
                                    game_rules, game_to_problem, parity_fixture, z_channel)
from qbilinear.hierarchy import build_new, build_npa, rank_one_point
from qbilinear.model import ScalarPoint, is_feasible
from qbilinear.sdp import Status, primal_residuals, solve, verify

TOL = 1e-6
SEEDS = list(range(24))
BUILD = {"new": build_new, "npa": build_npa}


def instance(seed: int) -> RandomInstance:
    # two to four symbols; four-symbol third levels dominate the run time
    return RandomInstance(seed, total=(2, 3, 3, 4)[seed % 4])


@functools.lru_cache(maxsize=None)
def value(seed: int, kind: str, n: int) -> float:
    inst = BUILD[kind](instance(seed).problem, n)
    res = solve(inst)
    if res.status is Status.UNBOUNDED:
        return math.inf
    assert res.status is Status.OPTIMAL, (seed, kind, n, res.status)
    assert verify(inst, res).passed
    return res.value


@functools.lru_cache(maxsize=None)
def oracle(seed: int) -> float:
    return instance(seed).oracle()


def symbols(seed):
    r = instance(seed)
    return r.N + r.M


def test_enough_instances():
    assert len(SEEDS) >= 20
    assert all(symbols(s) <= 4 for s in SEEDS)


# (a) and (b): every level bounds the classical optimum and levels only tighten

@pytest.mark.parametrize("seed", SEEDS)
def test_new_chain(seed):
    vals = [value(seed, "new", n) for n in (1, 2, 3)]
    assert oracle(seed) <= vals[-1] + TOL
    assert vals[1] <= vals[0] + TOL
    assert vals[2] <= vals[1] + TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_npa_chain(seed):
    v1, v2 = value(seed, "npa", 1), value(seed, "npa", 2)
    assert oracle(seed) <= v2 + TOL
    assert v2 <= v1 + TOL


# (c) the two-sided first level is at least as strong as NPA's

@pytest.mark.parametrize("seed", SEEDS)
def test_new_one_below_npa_one(seed):
    assert value(seed, "new", 1) <= value(seed, "npa", 1) + TOL


# (d) two-sided level 4 against NPA level 2; three-symbol fourth levels take minutes

SMALL = [s for s in SEEDS if symbols(s) == 2]


@pytest.mark.parametrize("seed", SMALL)
def test_new_four_below_npa_two(seed):
    assert value(seed, "new", 4) <= value(seed, "npa", 2) + TOL


# (e) scalar points embed as rank-one moment matrices

@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), kind=st.sampled_from(["new", "npa"]),
       n=st.integers(1, 3))
def test_rank_one_embedding(seed, kind, n):
    r = RandomInstance(seed, max_symbols=3 if n == 3 else 4)
    inst = BUILD[kind](r.problem, n)
    for pt in r.points(3):
        x = rank_one_point(inst, pt)
        res = primal_residuals(inst, x)
        assert res["min_eig"] >= -1e-9
        assert res["eq_inf"] <= 1e-9


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_oracle_below_new_level_one(seed):
    r = RandomInstance(seed)
    assert r.oracle() <= solve(build_new(r.problem, 1)).value + TOL


# built-in applications

def test_chsh_chain():
    g = chsh()
    p, rules = game_to_problem(g), game_rules(g)
    npa1 = solve(build_npa(p, 1, rules=rules)).value
    npa2 = solve(build_npa(p, 2, rules=rules)).value
    new1 = solve(build_new(p, 1)).value
    assert game_classical_value(g) <= npa2 + TOL
    assert npa2 <= npa1 + TOL
    assert new1 <= solve(build_npa(p, 1)).value + TOL
    assert game_classical_value(g) <= new1 + TOL


def test_z_channel_chain():
    c = z_channel()
    p = channel_to_problem(c)
    new1 = solve(build_new(p, 1)).value
    npa1 = solve(build_npa(p, 1, rules=channel_rules(c))).value
    assert channel_classical_value(c) <= new1 + TOL
    assert evaluate_protocol(c, four_dim_protocol(c)) <= new1 + TOL
    assert new1 <= npa1 + TOL


def test_z_channel_rank_one():
    c = z_channel()
    p = channel_to_problem(c)
    inst = build_new(p, 1)
    # deterministic code: message i -> input i, each output decoded as message 0
    K, X, Y = c.messages, c.n_in, c.n_out
    z = np.zeros(K * X)
    y = np.zeros(K * Y)
    for i in range(K):
        z[i * X + i] = 1
    y[:Y] = 1
    pt = ScalarPoint(z, y)
    assert is_feasible(p, pt)
    res = primal_residuals(inst, rank_one_point(inst, pt))
    assert res["min_eig"] >= -1e-9 and res["eq_inf"] <= 1e-9


@pytest.mark.parametrize("k", [1, 2, 3])
def test_extractor_chain(k):
    e = parity_fixture(k)
    simp = extractor_sdp_value(e, Variant.SIMPLIFIED).value
    full = extractor_sdp_value(e, Variant.FULL).value
    generic = solve(build_new(extractor_to_problem(e), 1)).value
    assert float(extractor_classical_err(e)) <= full + TOL
    assert full <= simp + TOL
    assert generic <= simp + TOL
