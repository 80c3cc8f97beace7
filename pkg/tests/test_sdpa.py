import numpy as np
import pytest
import scipy.sparse as sp

from qbilinear.applications import channel_to_problem, chsh, game_rules, game_to_problem, z_channel
from qbilinear.hierarchy import build_csplus, build_new, build_npa, CSPlusQuery
from qbilinear.sdp import BlockBuilder, SDPInstance, solve
from qbilinear.sdpa import (SDPAParseError, export_standard, from_sdpa_text, import_standard,
                            same_structure, to_sdpa_text)


def trivial():
    bb = BlockBuilder(1, "x")
    bb.add(0, 0, 0, 1.0)
    return SDPInstance(1, np.array([1.0]), [bb.build()], sp.csr_matrix((0, 1)), np.zeros(0))


def test_trivial_file_has_five_lines(tmp_path):
    path = tmp_path / "t.dat-s"
    export_standard(trivial(), path)
    text = path.read_text()
    assert text.splitlines() == ["1", "1", "1", "-1", "1 1 1 1 1"]
    assert text.endswith("\n")


def _instances():
    yield build_new(channel_to_problem(z_channel()), 1)
    yield build_npa(game_to_problem(chsh()), 2, rules=game_rules(chsh()))
    yield build_csplus(CSPlusQuery(2, target=np.eye(2)), 2)
    inst = trivial()
    inst.offset = 0.1
    yield inst


@pytest.mark.parametrize("inst", list(_instances()))
def test_round_trip(inst, tmp_path):
    path = tmp_path / "x.dat-s"
    export_standard(inst, path)
    back = import_standard(path)
    assert same_structure(inst, back)
    # byte-identical re-export
    assert to_sdpa_text(back) == path.read_text()


def test_deterministic_bytes():
    a = to_sdpa_text(build_new(channel_to_problem(z_channel()), 1))
    b = to_sdpa_text(build_new(channel_to_problem(z_channel()), 1))
    assert a == b


def test_offset_header():
    inst = trivial()
    inst.offset = 0.25
    assert to_sdpa_text(inst).splitlines()[0] == "* offset 0.25"


def test_foreign_diagonal_block():
    text = "1\n1\n-2\n1\n0 1 1 1 1\n1 1 1 1 1\n1 1 2 2 -1\n0 1 2 2 -3\n"
    inst = from_sdpa_text(text)
    assert [b.size for b in inst.blocks] == [1, 1]
    res = solve(inst)
    # x >= 1 and -x >= -3: maximize -x gives -1
    assert res.value == pytest.approx(-1.0, abs=1e-6)


def test_parse_error():
    with pytest.raises(SDPAParseError):
        from_sdpa_text("1\n1\n1\n")
    with pytest.raises(SDPAParseError):
        from_sdpa_text("1\n1\n1\n1\n0 1 1 x 1\n")


def _read_plain(path):
    """Minimal independent SDPA reader (no use of the package importer)."""
    lines = [ln for ln in open(path) if not ln.startswith(("*", '"'))]
    n, nb = int(lines[0]), int(lines[1])
    sizes = [int(s) for s in lines[2].split()]
    c = np.array([float(v) for v in lines[3].split()])
    F = {}
    for ln in lines[4:]:
        a, b, i, j, v = ln.split()
        a, b, i, j = int(a), int(b), int(i) - 1, int(j) - 1
        M = F.setdefault((a, b), np.zeros((abs(sizes[b - 1]),) * 2))
        M[i, j] = M[j, i] = float(v)
    return n, sizes, c, F


def test_external_solver_resolves_channel(tmp_path):
    cp = pytest.importorskip("cvxpy")
    path = tmp_path / "z.dat-s"
    export_standard(build_new(channel_to_problem(z_channel()), 1), path)
    n, sizes, c, F = _read_plain(path)
    x = cp.Variable(n)
    cons = []
    for b, s in enumerate(sizes, start=1):
        zero = np.zeros((abs(s),) * 2)
        X = sum(x[a - 1] * F[(a, b)] for a in range(1, n + 1) if (a, b) in F) - F.get((0, b), zero)
        cons.append(X >> 0 if s > 0 else cp.diag(X) >= 0)
    prob = cp.Problem(cp.Minimize(c @ x), cons)
    prob.solve(solver="SCS", eps=1e-7)
    assert -prob.value == pytest.approx(0.5 + 1 / np.sqrt(6), abs=1e-3)
