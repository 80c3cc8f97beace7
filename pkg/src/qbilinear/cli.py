"""Command-line interface.

    qbilinear channel --file z.json --hierarchy new --level 1 --oracle
    qbilinear csplus --file k.json --level 3
    qbilinear game --file chsh.json --hierarchy npa --level 1

Exit codes: 0 when the relaxation was solved (or is feasible at the level),
2 for a certified refutation or a proven infeasible relaxation, 3 when the
solver gave no reliable answer, 1 on input or runtime errors.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

from . import __version__
from .applications.channel import channel_classical_value, channel_rules, channel_to_problem
from .applications.csplus import Verdict, csplus_membership
from .applications.common import EnumerationTooLarge
from .applications.extractor import (NonIntegralSupport, extractor_classical_err,
                                     extractor_to_problem, extractor_to_sdp1)
from .applications.games import game_classical_value, game_rules, game_to_problem
from .hierarchy import HierarchyKind, build_csplus, build_new, build_npa
from .model import ModelError
from .schemas import load_channel, load_csplus, load_extractor, load_game, load_problem, read_json
from .sdp import SDPInstance, SolveOptions, Status, solve, verify
from .sdpa import export_standard
from .words import LevelTooLarge

EXIT_OK, EXIT_ERROR, EXIT_REFUTED, EXIT_UNRELIABLE = 0, 1, 2, 3

COMMANDS = ("game", "channel", "extractor", "csplus", "solve-file")


@dataclass
class RunReport:
    command: list
    subcommand: str
    file: Optional[str] = None
    hierarchy: Optional[str] = None
    level: Optional[int] = None
    variant: Optional[str] = None
    statistics: dict = field(default_factory=dict)
    status: str = ""
    value: Optional[float] = None
    oracle: Optional[dict] = None
    residuals: dict = field(default_factory=dict)
    verification: dict = field(default_factory=dict)
    verdict: Optional[str] = None
    certificate_margin: Optional[float] = None
    export: Optional[str] = None
    error: Optional[str] = None
    wall_time: float = 0.0
    version: str = __version__
    exit_code: int = EXIT_OK

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if hasattr(obj, "item"):
        return _jsonable(obj.item())
    return obj


def statistics(inst: SDPInstance) -> dict:
    """Variable count and block inventory, available before solving."""
    inv = Counter((b.label.split("[")[0] or "block", b.size) for b in inst.blocks)
    return {
        "variables": inst.var_count,
        "equalities": int(inst.eq_matrix.shape[0]),
        "psd_blocks": len(inst.blocks),
        "largest_block": max((b.size for b in inst.blocks), default=0),
        "block_inventory": [{"family": fam, "size": size, "count": n}
                            for (fam, size), n in sorted(inv.items())],
    }


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qbilinear", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--file", action="append", required=True,
                       help="input JSON; repeat for a batch")
        p.add_argument("--hierarchy", choices=["npa", "new"], default=None)
        p.add_argument("--level", type=int, default=1)
        p.add_argument("--variant", choices=["full", "simplified"], default="simplified",
                       help="extractor SDP variant (level 1 only)")
        p.add_argument("--oracle", action="store_true", help="also compute the classical value")
        p.add_argument("--export-sdpa", metavar="PATH", default=None)
        p.add_argument("--eps", type=float, default=1e-8, help="solver tolerance")
        p.add_argument("--out", metavar="PATH", default=None, help="write the JSON report here")
        p.add_argument("--seedless", action="store_true",
                       help="deterministic run (no randomness is used by any command)")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers for batches")
        p.add_argument("--no-rules", action="store_true",
                       help="disable projector relations for NPA on games and channels")
    return ap


def _kind(args, default: str) -> HierarchyKind:
    return HierarchyKind(args.hierarchy or default)


def _build(args, data: dict, rep: RunReport):
    """Return (instance, oracle thunk) for one input."""
    cmd, n = args.cmd, args.level
    if cmd == "game":
        g = load_game(data)
        kind = _kind(args, "npa")
        p = game_to_problem(g)
        rules = None if args.no_rules else game_rules(g)
        inst = build_npa(p, n, rules=rules) if kind is HierarchyKind.NPA else build_new(p, n)
        rep.hierarchy = kind.value
        return inst, lambda: {"value": game_classical_value(g)}
    if cmd == "channel":
        c = load_channel(data)
        kind = _kind(args, "new")
        p = channel_to_problem(c)
        rules = None if args.no_rules else channel_rules(c)
        inst = build_npa(p, n, rules=rules) if kind is HierarchyKind.NPA else build_new(p, n)
        rep.hierarchy = kind.value

        def oracle():
            if c.W_exact is not None:
                v = channel_classical_value(c, exact=True)
                return {"value": float(v), "exact": str(v)}
            return {"value": channel_classical_value(c)}
        return inst, oracle
    if cmd == "extractor":
        e = load_extractor(data)
        if args.hierarchy is None:
            if n != 1:
                raise ModelError("extractor: --variant applies to level 1; "
                                 "pass --hierarchy for higher levels")
            inst = extractor_to_sdp1(e, args.variant)
            rep.variant = args.variant
            rep.hierarchy = "new"
        else:
            kind = _kind(args, "new")
            p = extractor_to_problem(e)
            inst = build_npa(p, n) if kind is HierarchyKind.NPA else build_new(p, n)
            rep.hierarchy = kind.value
        return inst, lambda: {"value": extractor_classical_err(e)}
    if cmd == "solve-file":
        p, rules = load_problem(data)
        kind = _kind(args, "new")
        inst = build_npa(p, n, rules=rules) if kind is HierarchyKind.NPA else build_new(p, n)
        rep.hierarchy = kind.value
        return inst, None
    raise AssertionError(cmd)


def run_one(args, path: str) -> RunReport:
    t0 = time.perf_counter()
    rep = RunReport(command=list(getattr(args, "argv", []) or []), subcommand=args.cmd,
                    file=path, level=args.level)
    try:
        if args.level < 1:
            raise ModelError("--level: must be >= 1")
        data = read_json(path)
        opts = SolveOptions(feas_tol=args.eps, gap_tol=args.eps)
        if args.cmd == "csplus":
            _run_csplus(args, data, opts, rep)
        else:
            inst, oracle = _build(args, data, rep)
            rep.statistics = statistics(inst)
            if args.export_sdpa:
                export_standard(inst, _export_path(args.export_sdpa, path, args))
                rep.export = _export_path(args.export_sdpa, path, args)
            res = solve(inst, opts)
            rep.status = res.status.value
            rep.value = res.value
            rep.residuals = res.residuals
            if res.status in (Status.OPTIMAL, Status.INACCURATE, Status.INFEASIBLE):
                vr = verify(inst, res, tol=max(1e-6, 100 * args.eps))
                rep.verification = vr.to_dict()
                rep.certificate_margin = vr.margin
            if args.oracle:
                rep.oracle = oracle() if oracle else {"note": "no classical oracle for this input"}
            rep.exit_code = _exit_for_status(res.status, rep.verification)
    except (ModelError, LevelTooLarge, EnumerationTooLarge, NonIntegralSupport, OSError,
            ValueError) as exc:
        rep.error = f"{type(exc).__name__}: {exc}"
        rep.exit_code = EXIT_ERROR
    rep.wall_time = time.perf_counter() - t0
    return rep


def _export_path(base: str, path: str, args) -> str:
    if len(args.file) == 1:
        return base
    stem = os.path.splitext(os.path.basename(path))[0]
    root, ext = os.path.splitext(base)
    return f"{root}.{stem}{ext or '.dat-s'}"


def _exit_for_status(status: Status, verification: dict) -> int:
    if status in (Status.OPTIMAL, Status.UNBOUNDED):
        return EXIT_OK
    if status is Status.INFEASIBLE and verification.get("certified"):
        return EXIT_REFUTED
    return EXIT_UNRELIABLE


def _run_csplus(args, data, opts, rep: RunReport):
    q = load_csplus(data)
    rep.hierarchy = "csplus"
    if args.oracle:
        rep.oracle = {"note": "no classical oracle for cone membership"}
    if q.membership:
        inst = build_csplus(q, args.level)
        rep.statistics = statistics(inst)
        if args.export_sdpa:
            rep.export = _export_path(args.export_sdpa, rep.file, args)
            export_standard(inst, rep.export)
        m = csplus_membership(q.target, args.level, opts)
        rep.verdict = m.verdict.value
        rep.value = m.margin
        rep.status = m.result.status.value if m.result else ""
        rep.verification = m.report.get("verify", {})
        if m.verdict is Verdict.CERTIFIED_OUTSIDE:
            rep.certificate_margin = rep.verification.get("margin")
            rep.exit_code = EXIT_REFUTED
        elif m.verdict is Verdict.FEASIBLE_AT_LEVEL:
            rep.exit_code = EXIT_OK
        else:
            rep.verdict = "inconclusive (numerically infeasible, uncertified)" \
                if (m.margin is not None and m.margin < 0) else m.verdict.value
            rep.exit_code = EXIT_UNRELIABLE
        return
    inst = build_csplus(q, args.level)
    rep.statistics = statistics(inst)
    if args.export_sdpa:
        rep.export = _export_path(args.export_sdpa, rep.file, args)
        export_standard(inst, rep.export)
    res = solve(inst, opts)
    rep.status = res.status.value
    rep.value = res.value
    rep.residuals = res.residuals
    if res.status in (Status.OPTIMAL, Status.INACCURATE, Status.INFEASIBLE):
        vr = verify(inst, res, tol=max(1e-6, 100 * args.eps))
        rep.verification = vr.to_dict()
        rep.certificate_margin = vr.margin
    rep.exit_code = _exit_for_status(res.status, rep.verification)


def _worker(payload):
    args, path = payload
    return run_one(args, path)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    args.argv = argv
    files = args.file
    if args.jobs > 1 and len(files) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(_worker, [(args, f) for f in files]))
    else:
        reports = [run_one(args, f) for f in files]

    payload = reports[0].to_dict() if len(reports) == 1 else {
        "reports": [r.to_dict() for r in reports]}
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        except OSError as exc:
            print(f"cannot write {args.out}: {exc}", file=sys.stderr)
            return EXIT_ERROR
    print(text)
    for r in reports:
        if r.error:
            print(f"error: {r.file}: {r.error}", file=sys.stderr)
    codes = [r.exit_code for r in reports]
    for code in (EXIT_ERROR, EXIT_UNRELIABLE, EXIT_REFUTED):
        if code in codes:
            return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
