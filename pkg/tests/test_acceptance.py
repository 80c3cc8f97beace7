"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest -s tests/test_acceptance.py`` (the lines are also written
when output is captured) or directly with ``python3 tests/test_acceptance.py``.
"""
import math
import subprocess
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from qbilinear.applications import (Variant, channel_classical_value, channel_rules,
                                    channel_to_problem, chsh, csplus_membership,
                                    evaluate_protocol, extractor_bound_check,
                                    extractor_classical_err, extractor_sdp_value,
                                    four_dim_protocol, game_classical_value, game_rules,
                                    game_sdp_value, game_to_problem, k_matrix, parity_fixture,
                                    z_channel)
from qbilinear.applications.csplus import Verdict
from qbilinear.applications.extractor import Extractor
from qbilinear.hierarchy import build_new, build_npa
from qbilinear.sdp import Status, solve, verify
from qbilinear.sdpa import from_sdpa_text, same_structure, to_sdpa_text

TARGET = 0.5 + 1 / math.sqrt(6)
LINES: dict = {}
OPTIMAL: list = []      # (name, instance, result) for criterion 9


@pytest.fixture
def report(request):
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def emit(n, ok, detail, elapsed):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f}s]"
        LINES[n] = line
        if capman is not None:
            with capman.global_and_fixture_disabled():
                print("\n" + line, flush=True)
        else:
            print(line, flush=True)
        assert ok, line
    return emit


def _solved(name, inst):
    res = solve(inst)
    if res.status is Status.OPTIMAL:
        OPTIMAL.append((name, inst, res))
    return res


def test_criterion_1(report):
    t = time.perf_counter()
    v = channel_classical_value(z_channel(), exact=True)
    f = channel_classical_value(z_channel())
    el = time.perf_counter() - t
    ok = v == Fraction(5, 6) and abs(f - 5 / 6) <= 1e-12 and el < 1
    report(1, ok, f"Z classical = {v} (float {f!r})", el)


def test_criterion_2(report):
    t = time.perf_counter()
    res = _solved("Z new 1", build_new(channel_to_problem(z_channel()), 1))
    el = time.perf_counter() - t
    ok = res.status is Status.OPTIMAL and abs(res.value - TARGET) <= 5e-4 and el < 30
    report(2, ok, f"Z new level 1 = {res.value:.8f} (target {TARGET:.8f})", el)


def test_criterion_3(report):
    t = time.perf_counter()
    c = z_channel()
    p = channel_to_problem(c)
    proj = _solved("Z npa 1", build_npa(p, 1, rules=channel_rules(c)))
    plain = solve(build_npa(p, 1))
    el = time.perf_counter() - t
    ok = proj.value is not None and proj.value >= 0.999 and plain.value >= 0.999 and el < 30
    report(3, ok, f"Z NPA level 1 = {proj.value:.6f} with projector relations, "
                  f"{plain.value} ({plain.status.value}) without", el)


def test_criterion_4(report):
    t = time.perf_counter()
    c = z_channel()
    v = evaluate_protocol(c, four_dim_protocol(c))
    el = time.perf_counter() - t
    sdp = solve(build_new(channel_to_problem(c), 1)).value
    ok = abs(v - TARGET) <= 1e-10 and v <= sdp + 1e-3 and el < 1
    report(4, ok, f"protocol = {v!r}, |diff| = {abs(v - TARGET):.1e}, new level 1 = {sdp:.8f}",
           el)


def test_criterion_5(report):
    t = time.perf_counter()
    mk = csplus_membership(k_matrix(), 3)
    mi = csplus_membership(np.eye(5), 3)
    el = time.perf_counter() - t
    kmargin = mk.report.get("verify", {}).get("margin")
    ok = (mk.verdict is Verdict.CERTIFIED_OUTSIDE and kmargin is not None and kmargin >= 1e-6
          and mi.verdict is Verdict.FEASIBLE_AT_LEVEL and el < 1800)
    report(5, ok, f"K: {mk.verdict.value} (lambda {mk.margin}, Farkas margin {kmargin}); "
                  f"I5: {mi.verdict.value} (lambda {mi.margin})", el)


def test_criterion_6(report):
    t = time.perf_counter()
    g = chsh()
    inst = build_npa(game_to_problem(g), 1, rules=game_rules(g))
    res = _solved("CHSH npa 1", inst)
    cl = game_classical_value(g)
    el = time.perf_counter() - t
    ana = math.cos(math.pi / 8) ** 2
    ok = abs(res.value - ana) <= 1e-4 and cl == 0.75 and el < 10
    report(6, ok, f"CHSH NPA level 1 = {res.value:.8f} (cos^2(pi/8) = {ana:.8f}), "
                  f"classical = {cl}", el)


def test_criterion_7(report):
    t = time.perf_counter()
    here = Path(__file__).parent
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           str(here / "test_properties.py")],
                          capture_output=True, text=True, cwd=here.parent)
    el = time.perf_counter() - t
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = proc.returncode == 0 and el < 600
    report(7, ok, f"property suite: {tail}", el)


def _balanced(n_bits):
    # one seed bit selects which of the two low source bits is output
    table = np.array([[(x >> s) & 1 for x in range(2 ** n_bits)] for s in range(2)])
    return Extractor(n_bits, 1, 1, table, k=n_bits, name=f"bit-{n_bits}")


def test_criterion_8(report):
    t = time.perf_counter()
    lines, ok = [], True
    family = [parity_fixture(k) for k in (1, 2, 3, 4)] + [_balanced(3), _balanced(4)]
    for e in family:
        simp = extractor_sdp_value(e, Variant.SIMPLIFIED).value
        full = extractor_sdp_value(e, Variant.FULL).value
        cap = 1 - 2.0 ** -e.m_bits
        ok &= simp <= cap + 1e-6 and full <= simp + 1e-6
        lines.append(f"{e.name} k={e.k:g}: simp {simp:.4f} full {full:.4f}")
    slacks = []
    for k in (1, 2, 3, 4):
        chk = extractor_bound_check(parity_fixture(k))
        ok &= bool(chk["holds"])
        slacks.append(f"k={k} slack {chk['thm1_slack']:.3f}/{chk['thm2_slack']:.3f}")
    for e in (parity_fixture(4), _balanced(3), _balanced(4)):
        ok &= extractor_classical_err(e, exact=True) == 0
    el = time.perf_counter() - t
    ok &= el < 300
    report(8, ok, "; ".join(lines + slacks), el)


def test_criterion_9(report):
    t = time.perf_counter()
    problems = []
    if not OPTIMAL:
        for name, inst in [("Z new 1", build_new(channel_to_problem(z_channel()), 1)),
                           ("CHSH npa 1", build_npa(game_to_problem(chsh()), 1,
                                                    rules=game_rules(chsh())))]:
            _solved(name, inst)
    for name, inst, res in OPTIMAL:
        text = to_sdpa_text(inst)
        back = from_sdpa_text(text)
        if not (same_structure(inst, back) and to_sdpa_text(back) == text):
            problems.append(f"{name}: round trip")
        if not verify(inst, res).passed:
            problems.append(f"{name}: verify")
        again = solve(inst)
        if abs(again.value - res.value) > 1e-9:
            problems.append(f"{name}: repeat {again.value - res.value:.1e}")
    el = time.perf_counter() - t
    names = ", ".join(n for n, _, _ in OPTIMAL)
    report(9, not problems, f"round trip, verify and repeat on [{names}] "
                            f"{'ok' if not problems else problems}", el)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
