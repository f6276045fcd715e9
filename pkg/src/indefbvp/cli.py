"""Command-line interface.

Exit codes: 0 when the run completed, 2 when it completed but the
certificate is inconclusive, 1 on any error. Every run writes
``manifest.json`` into the output directory.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import DEFAULTS, override_tolerances

SUBCOMMANDS = ("analyze", "eigen", "solve", "sweep", "radial", "lienard", "degree")
PROFILE_ROWS = 401


class CliError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    input: Path
    out: Path
    tol_abs: float | None = None
    tol_rel: float | None = None
    seed: int = DEFAULTS.seed
    verbose: int = 0
    json: bool = False
    options: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# output helpers


def jsonable(obj):
    """Plain JSON types; non-finite floats become ``"inf"``, ``"-inf"``, ``"nan"``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict())
    return str(obj)


def write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(jsonable(data), indent=2) + "\n")
    return path


def emit_plotdata(out: Path, profiles=(), sweeps=(), n: int = PROFILE_ROWS, prefix: str = "solution") -> list[Path]:
    """Write one ``x,u,uprime`` CSV per profile and one CSV per sweep.

    Sweep CSVs have the columns ``param,outcome,amplitude``; theta sweeps use
    ``r,theta,outcome,amplitude``. ``amplitude`` is the largest ``max u``
    over the solutions found and is empty when there are none.
    """
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for k, prof in enumerate(profiles):
        written.append(prof.trajectory.write_csv(out / f"{prefix}_{k}.csv", n))
    for sw in sweeps:
        path = out / f"sweep_{sw.kind}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            if sw.kind == "theta":
                w.writerow(["r", "theta", "outcome", "amplitude"])
            else:
                w.writerow(["param", "outcome", "amplitude"])
            for pt in sw.points:
                amp = "" if pt.amplitude is None else repr(float(pt.amplitude))
                vals = [repr(float(v)) for v in pt.params.values()]
                w.writerow(vals + [pt.outcome, amp])
        written.append(path)
    return written


def write_manifest(cfg: RunConfig, extra: dict | None = None) -> Path:
    data = cfg.input.read_bytes() if cfg.input.is_file() else b""
    manifest = {
        "tool": "indefbvp",
        "version": __version__,
        "subcommand": cfg.subcommand,
        "input": str(cfg.input),
        "input_sha256": hashlib.sha256(data).hexdigest(),
        "options": cfg.options,
        "seed": cfg.seed,
        "tolerances": DEFAULTS.as_dict(),
        "timestamp": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        manifest.update(extra)
    cfg.out.mkdir(parents=True, exist_ok=True)
    return write_json(cfg.out / "manifest.json", manifest)


def _exit_for(conclusion: str | None) -> int:
    from .certify import INCONCLUSIVE
    return 2 if conclusion == INCONCLUSIVE else 0


def _say(cfg: RunConfig, text: str) -> None:
    if not cfg.json:
        print(text)


def _box_from(values, default_size: float | None = None):
    from .shoot import default_box
    if not values:
        return default_box(default_size)
    if len(values) == 1:
        return default_box(values[0])
    if len(values) == 4:
        c0, c1, d0, d1 = values
        if not (c0 < c1 and d0 < d1):
            raise CliError("--box needs c_min < c_max and d_min < d_max")
        return tuple(values)
    raise CliError("--box takes one value (size) or four (c_min c_max d_min d_max)")


# ---------------------------------------------------------------------------
# subcommands


def cmd_analyze(cfg: RunConfig) -> int:
    from .applications import lienard_certificate
    from .certify import check_hypotheses
    from .problem_io import load_problem

    p = load_problem(cfg.input)
    cert = lienard_certificate(p) if p.damping is not None else check_hypotheses(p)
    write_json(cfg.out / "certificate.json", cert)
    (cfg.out / "report.txt").write_text(cert.report() + "\n")
    if cfg.json:
        print(json.dumps(jsonable(cert.to_dict()), indent=2))
    else:
        print(cert.report())
    return _exit_for(cert.conclusion)


def cmd_eigen(cfg: RunConfig) -> int:
    from .eigen import DIRICHLET, NEUMANN, EigenQuery, first_eigenvalue, lambda_thresholds
    from .model import sign_structure
    from .problem_io import load_problem

    p = load_problem(cfg.input)
    o = cfg.options
    rows = []
    if o.get("interval"):
        bcs = {"d": DIRICHLET, "n": NEUMANN}
        spec = (o.get("bc") or "dd").lower()
        if len(spec) != 2 or any(ch not in bcs for ch in spec):
            raise CliError("--bc must be two letters from d/n, e.g. dd or nd")
        queries = [EigenQuery(p.weight, tuple(o["interval"]), bcs[spec[0]], bcs[spec[1]], o.get("drift") or 0.0)]
        rotation = 0.0
    else:
        th = lambda_thresholds(p, sign_structure(p.weight), o.get("drift") or 0.0)
        rotation = th.rotation
        weight = p.weight.shifted(rotation) if rotation else p.weight
        queries = [EigenQuery(weight, t.interval, t.left_bc, t.right_bc, o.get("drift") or 0.0) for t in th.intervals]
    for k, q in enumerate(queries):
        res = first_eigenvalue(q)
        rows.append(res.to_dict())
        _say(cfg, f"[{q.interval[0]:.10g}, {q.interval[1]:.10g}] {q.left_bc}/{q.right_bc}: "
                  f"lambda_1 = {res.value:.12g}  bracket [{res.bracket[0]:.12g}, {res.bracket[1]:.12g}]")
        path = cfg.out / f"eigenfunction_{k}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "phi", "phiprime"])
            for row in zip(res.x, res.phi, res.dphi):
                w.writerow([repr(float(c)) for c in row])
    # with a rotation the intervals refer to x -> a((x + rotation) mod T)
    summary = {"eigenvalues": rows, "rotation": rotation}
    write_json(cfg.out / "eigen.json", summary)
    if cfg.json:
        print(json.dumps(jsonable(summary), indent=2))
    return 0


def _solve_problem(p, cfg: RunConfig, cert, fld=None):
    from .certify import EXISTS
    from .shoot import find_neumann_solutions, find_periodic_solutions

    o = cfg.options
    if p.bc == "neumann":
        b = _box_from(o.get("box"))
        c_range = (max(b[0], DEFAULTS.box_c_min), b[1])
        return find_neumann_solutions(p, c_range, fld=fld), {"c_range": list(c_range)}
    res = find_periodic_solutions(p, _box_from(o.get("box")), o.get("max_depth"), fld=fld,
                                  expand=cert is not None and cert.conclusion == EXISTS)
    return res.solutions, {"boxes": [list(b) for b in res.boxes], "evaluations": res.evaluations,
                           "located": [b.to_dict() for b in res.located], "rejected": res.rejected}


def cmd_solve(cfg: RunConfig) -> int:
    from .certify import check_hypotheses
    from .problem_io import load_problem

    p = load_problem(cfg.input)
    if p.damping is not None:
        return cmd_lienard(cfg)
    cert = check_hypotheses(p)
    sols, search = _solve_problem(p, cfg, cert)
    emit_plotdata(cfg.out, sols)
    summary = {"certificate": {"conclusion": cert.conclusion, "strength": cert.strength,
                               "routing": cert.routing, "nonexistence": cert.nonexistence},
               "count": len(sols), "solutions": [s.to_dict() for s in sols], "search": search}
    write_json(cfg.out / "summary.json", summary)
    _report_solutions(cfg, sols, cert.conclusion)
    if cfg.json:
        print(json.dumps(jsonable(summary), indent=2))
    return _exit_for(cert.conclusion)


def _report_solutions(cfg: RunConfig, sols, conclusion) -> None:
    _say(cfg, f"certificate: {conclusion}; {len(sols)} positive solution(s)")
    for k, s in enumerate(sols):
        _say(cfg, f"  #{k}: u(0) = {s.initial[0]:.12g}, u'(0) = {s.initial[1]:.12g}, "
                  f"min u = {s.min_u:.6g}, max u = {s.max_u:.6g}, residual = {s.residual:.2e}")


def cmd_sweep(cfg: RunConfig) -> int:
    from .certify import alpha0_bound, check_hypotheses, default_forcing
    from .model import sign_structure
    from .problem_io import load_problem
    from .shoot import homotopy_sweep_alpha, homotopy_sweep_theta, nu_sweep

    p = load_problem(cfg.input)
    o = cfg.options
    kind = o.get("kind") or "nu"
    n = o.get("points") or 10
    if kind == "nu":
        lo, hi = o.get("nu_from"), o.get("nu_to")
        if lo is None or hi is None:
            raise CliError("a nu sweep needs --nu-from and --nu-to")
        if not 0 < lo <= hi:
            raise CliError("--nu-from and --nu-to must satisfy 0 < from <= to")
        cert = check_hypotheses(p)
        nu_star = cert.nu_star.nu_star if cert.nu_star else None
        size = o["box"][0] if o.get("box") and len(o["box"]) == 1 else None
        rep = nu_sweep(p, (lo, hi), n, nu_star=nu_star, size=size, max_depth=o.get("max_depth"))
    elif kind == "theta":
        rs = o.get("r") or [1e-3]
        thetas = np.linspace(1.0 / n, 1.0, n)
        rep = homotopy_sweep_theta(p, rs, thetas)
    elif kind == "alpha":
        R = o.get("R")
        if R is None:
            raise CliError("an alpha sweep needs --R")
        v = default_forcing(sign_structure(p.weight), p.T)
        a0 = alpha0_bound(p, R, v)
        rep = homotopy_sweep_alpha(p, R, v, np.linspace(0.0, a0, n), o.get("max_depth"))
        rep.brackets["alpha0"] = a0
    else:
        raise CliError(f"unknown sweep kind {kind!r}")
    emit_plotdata(cfg.out, sweeps=[rep])
    write_json(cfg.out / "sweep.json", rep)
    for pt in rep.points:
        params = ", ".join(f"{k}={v:.6g}" for k, v in pt.params.items())
        amp = "" if pt.amplitude is None else f"  max u = {pt.amplitude:.6g}"
        _say(cfg, f"{params}: {pt.outcome}{amp}")
    if cfg.json:
        print(json.dumps(jsonable(rep.to_dict()), indent=2))
    return 0


def cmd_radial(cfg: RunConfig) -> int:
    from .applications import radial_backmap, radial_reduce
    from .certify import check_hypotheses
    from .problem_io import dump_problem, load_annulus
    from .shoot import find_neumann_solutions

    spec = load_annulus(cfg.input)
    red, p = radial_reduce(spec)
    (cfg.out / "reduced.yaml").write_text(dump_problem(p))
    cert = check_hypotheses(p)
    o = cfg.options
    c_range = (DEFAULTS.box_c_min, o["box"][0]) if o.get("box") and len(o["box"]) == 1 else None
    sols = find_neumann_solutions(p, c_range)
    radial = [radial_backmap(red, s) for s in sols]
    emit_plotdata(cfg.out, sols)
    for k, rp in enumerate(radial):
        rp.write_csv(cfg.out / f"radial_{k}.csv")
    summary = {"reduction": red.to_dict(), "certificate": {"conclusion": cert.conclusion, "strength": cert.strength,
                                                           "routing": cert.routing},
               "count": len(sols), "solutions": [s.to_dict() for s in sols], "radial": [r.to_dict() for r in radial]}
    write_json(cfg.out / "summary.json", summary)
    _say(cfg, f"T = {red.T:.15g} (quadrature {red.T_quadrature:.15g})")
    _report_solutions(cfg, sols, cert.conclusion)
    for k, rp in enumerate(radial):
        _say(cfg, f"  #{k} radial residual {rp.residual:.2e}, w'(R1), w'(R2) up to {rp.neumann_residual:.2e}")
    if cfg.json:
        print(json.dumps(jsonable(summary), indent=2))
    return _exit_for(cert.conclusion)


def cmd_lienard(cfg: RunConfig) -> int:
    from .applications import lienard_certificate, lienard_phi_check, lienard_search
    from .certify import EXISTS
    from .problem_io import load_problem

    p = load_problem(cfg.input)
    if p.damping is None or p.bc != "periodic":
        raise CliError("the lienard subcommand needs a periodic problem with a damping block")
    cert = lienard_certificate(p)
    o = cfg.options
    res = lienard_search(p, _box_from(o.get("box")), o.get("max_depth"), expand=cert.conclusion == EXISTS)
    sols = res.solutions
    phi = [lienard_phi_check(s, p.damping, p.weight).to_dict() for s in sols]
    emit_plotdata(cfg.out, sols)
    summary = {"certificate": cert.to_dict(), "damping": res.damping.to_dict(), "count": len(sols),
               "solutions": [s.to_dict() for s in sols], "phi_check": phi,
               "search": {"boxes": [list(b) for b in res.boxes], "evaluations": res.evaluations}}
    write_json(cfg.out / "summary.json", summary)
    _report_solutions(cfg, sols, cert.conclusion)
    if cfg.json:
        print(json.dumps(jsonable(summary), indent=2))
    return _exit_for(cert.conclusion)


def cmd_degree(cfg: RunConfig) -> int:
    from . import degree as deg
    from .problem_io import load_problem
    from .shoot import displacement_map

    p = load_problem(cfg.input)
    o = cfg.options
    box = _box_from(o.get("box"))
    F = displacement_map(p, neumann_form=p.bc == "neumann")
    res = deg.locate(F, box, o.get("max_depth"))
    write_json(cfg.out / "degree.json", res)
    _say(cfg, f"box {list(box)}: winding {res.whole.winding} (certified {res.whole.certified})")
    for b in res.boxes:
        _say(cfg, f"  [{b.box[0]:.6g}, {b.box[1]:.6g}] x [{b.box[2]:.6g}, {b.box[3]:.6g}]: "
                  f"winding {b.winding}{'' if b.certified else ' (uncertified)'}")
    if cfg.json:
        print(json.dumps(jsonable(res.to_dict()), indent=2))
    return 0


COMMANDS = {"analyze": cmd_analyze, "eigen": cmd_eigen, "solve": cmd_solve, "sweep": cmd_sweep,
            "radial": cmd_radial, "lienard": cmd_lienard, "degree": cmd_degree}


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", "-i", required=True, type=Path, help="problem file (annulus file for radial)")
    common.add_argument("--out", "-o", type=Path, default=Path("out"), help="output directory (default: out)")
    common.add_argument("--tol-abs", type=float, help="absolute integration tolerance")
    common.add_argument("--tol-rel", type=float, help="relative integration tolerance")
    common.add_argument("--seed", type=int, default=DEFAULTS.seed, help="recorded in the manifest")
    common.add_argument("--json", action="store_true", help="print the JSON result instead of text")
    common.add_argument("--verbose", "-v", action="count", default=0)

    search = argparse.ArgumentParser(add_help=False)
    search.add_argument("--box", type=float, nargs="+", metavar="V",
                        help="search box: SIZE, or C_MIN C_MAX D_MIN D_MAX")
    search.add_argument("--max-depth", type=int, help="subdivision depth for the degree search")

    ap = argparse.ArgumentParser(prog="indefbvp", description="Positive solutions of u'' + nu a(x) g(u) = 0.")
    ap.add_argument("--version", action="version", version=f"indefbvp {__version__}")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("analyze", parents=[common], help="check hypotheses and write a certificate")
    e = sub.add_parser("eigen", parents=[common], help="first eigenvalues on the positivity intervals")
    e.add_argument("--interval", type=float, nargs=2, metavar=("LO", "HI"))
    e.add_argument("--bc", help="boundary letters for --interval: dd, nd or dn (default dd)")
    e.add_argument("--drift", type=float, help="drift coefficient C")
    sub.add_parser("solve", parents=[common, search], help="compute positive solutions")
    s = sub.add_parser("sweep", parents=[common, search], help="parameter sweeps")
    s.add_argument("--kind", choices=("nu", "theta", "alpha"), default="nu")
    s.add_argument("--nu-from", type=float)
    s.add_argument("--nu-to", type=float)
    s.add_argument("--points", type=int, help="number of grid points (default 10)")
    s.add_argument("--r", type=float, nargs="+", help="amplitudes for a theta sweep (default 1e-3)")
    s.add_argument("--R", type=float, help="amplitude cap for an alpha sweep")
    sub.add_parser("radial", parents=[common, search], help="radial solutions on an annulus")
    sub.add_parser("lienard", parents=[common, search], help="periodic damped equation")
    sub.add_parser("degree", parents=[common, search], help="winding numbers of the shooting map")
    return ap


def parse_config(argv=None) -> RunConfig:
    ns = build_parser().parse_args(argv)
    base = {"subcommand", "input", "out", "tol_abs", "tol_rel", "seed", "verbose", "json"}
    options = {k: v for k, v in vars(ns).items() if k not in base and v is not None}
    return RunConfig(ns.subcommand, ns.input, ns.out, ns.tol_abs, ns.tol_rel, ns.seed, ns.verbose, ns.json,
                     options)


def run(cfg: RunConfig) -> int:
    from .expr import ExprError
    from .model import ModelError
    from .problem_io import ProblemFileError

    for name, val in (("--tol-abs", cfg.tol_abs), ("--tol-rel", cfg.tol_rel)):
        if val is not None and not (0 < val < 1):
            print(f"error: {name} must lie in (0, 1)", file=sys.stderr)
            return 1
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory {cfg.out}: {exc.strerror}", file=sys.stderr)
        return 1
    with override_tolerances(cfg.tol_abs, cfg.tol_rel):
        write_manifest(cfg)
        try:
            code = COMMANDS[cfg.subcommand](cfg)
        except (ProblemFileError, ExprError, ModelError, CliError, ValueError, ArithmeticError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            write_manifest(cfg, {"exit_code": 1, "error": str(exc)})
            return 1
        write_manifest(cfg, {"exit_code": code})
    return code


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
