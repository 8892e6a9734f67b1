"""Command-line driver: ``cmcflow {solve,flow,hmax,diagnose,verify}``."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import io
from .convexity import (EnteredCriticalBall, MultipleComponents, NonPositiveField, classify,
                        find_critical_points, nodal_set, rotation_flow)
from .domain import NonConvex, make_domain
from .elliptic import DegeneratePatch, OutsideMesh, RecoveredJet, SolverStall
from .flow import (IsoperimetricViolation, NewtonDiverged, StopCriteria, continue_flow,
                   estimate_hmax, solve_along)
from .mesh import MeshFailure, triangulate
from .sensitivity import difference_quotient_check
from .stability import stability_report

COMMANDS = ("solve", "flow", "hmax", "diagnose", "verify")
SOLVER_ERRORS = (NewtonDiverged, SolverStall, MeshFailure, DegeneratePatch, OutsideMesh,
                 MultipleComponents, EnteredCriticalBall, NonPositiveField)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "solve"
    domain: str = "disk:1"
    h: float = 0.05
    H: float = -0.5
    dH: float = 0.05
    direction: int = -1
    H_target: float | None = None
    grad_cap: float = 1e3
    dH_min: float = 1e-3
    tol: float = 0.01
    thetas: list = field(default_factory=lambda: [0.0, math.pi / 6, math.pi / 3])
    tau: float = math.pi / 2
    variations: int = 100
    seed: int = 0
    method: str = "cg"
    diagnostics: bool = False
    dq_check: bool = False
    threads: int = 1
    out: str | None = None
    only: list | None = None

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        for name in ("h", "dH", "grad_cap", "dH_min", "tol"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive number, got {v!r}")
        if self.h > 0.5:
            raise ConfigError(f"h = {self.h} is too coarse (max 0.5)")
        if not math.isfinite(self.H):
            raise ConfigError("H must be finite")
        if self.direction not in (-1, 1):
            raise ConfigError("direction must be -1 or +1")
        if self.variations < 0 or self.seed < 0 or self.threads < 1:
            raise ConfigError("variations and seed must be >= 0, threads >= 1")
        if self.method not in ("cg", "direct"):
            raise ConfigError(f"method must be cg or direct, got {self.method!r}")
        if not math.isfinite(self.tau):
            raise ConfigError("tau must be finite")
        try:
            self.domain_obj = make_domain(self.domain)
        except (NonConvex, ValueError) as exc:
            raise ConfigError(f"domain {self.domain!r}: {exc}") from exc
        return self


def _direction(text: str) -> int:
    t = text.strip()
    if t in ("-", "-1", "neg"):
        return -1
    if t in ("+", "1", "+1", "pos"):
        return 1
    raise argparse.ArgumentTypeError(f"direction must be '-' or '+', got {text!r}")


def _floats(text: str) -> list:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _ints(text: str) -> list:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = _Parser(add_help=False, argument_default=S)
    common.add_argument("--config", help="JSON file with RunConfig fields; flags win")
    common.add_argument("--domain", help="disk:R | ellipse:a,b | superellipse:a,b,p | fourier:c0;c1,phi1;...")
    common.add_argument("--h", type=float, help="mesh size")
    common.add_argument("--out", help="output directory")
    common.add_argument("--method", choices=["cg", "direct"])
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)

    p = _Parser(prog="cmcflow", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", parents=[common], argument_default=S,
                       help="solve at one H and report convexity and stability")
    s.add_argument("--H", type=float)
    s.add_argument("--variations", type=int)
    s.add_argument("--dq-check", dest="dq_check", action="store_true")

    f = sub.add_parser("flow", parents=[common], argument_default=S, help="continue in H")
    f.add_argument("--dH", type=float)
    f.add_argument("--dir", dest="direction", type=_direction)
    f.add_argument("--H-target", dest="H_target", type=float)
    f.add_argument("--grad-cap", dest="grad_cap", type=float)
    f.add_argument("--dH-min", dest="dH_min", type=float)
    f.add_argument("--diagnostics", action="store_true")

    m = sub.add_parser("hmax", parents=[common], argument_default=S, help="bracket H_max")
    m.add_argument("--tol", type=float)
    m.add_argument("--dH", type=float)
    m.add_argument("--grad-cap", dest="grad_cap", type=float)

    d = sub.add_parser("diagnose", parents=[common], argument_default=S,
                       help="nodal sets, critical points and rotation drift")
    d.add_argument("--H", type=float)
    d.add_argument("--theta", dest="thetas", type=_floats, help="comma-separated angles")
    d.add_argument("--tau", type=float)

    v = sub.add_parser("verify", parents=[common], argument_default=S,
                       help="run the acceptance checks")
    v.add_argument("--only", type=_ints, help="comma-separated criterion numbers")
    v.add_argument("--variations", type=int)
    return p


def load_config(argv) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    base = {}
    cfg_path = ns.pop("config", None)
    if cfg_path:
        try:
            with open(cfg_path) as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config {cfg_path}: {exc}") from exc
        if not isinstance(base, dict):
            raise ConfigError(f"config {cfg_path}: top level must be an object")
        known = {f.name for f in fields(RunConfig)}
        unknown = set(base) - known
        if unknown:
            raise ConfigError(f"config {cfg_path}: unknown keys {sorted(unknown)}")
    base.update(ns)
    try:
        cfg = RunConfig(**base)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    env = os.environ.get("CMCFLOW_THREADS")
    if env:
        try:
            cfg.threads = min(cfg.threads, max(1, int(env))) if "threads" in base else max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"CMCFLOW_THREADS={env!r} is not an integer") from exc
    return cfg.validate()


def _out_dir(cfg: RunConfig) -> Path | None:
    if cfg.out is None:
        return None
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _config_dict(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    d.pop("out")
    return d


def _emit(summary: dict, out: Path | None) -> None:
    if out is not None:
        io.write_json(out / "summary.json", summary)
    json.dump(summary, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def cmd_solve(cfg: RunConfig) -> int:
    mesh = triangulate(cfg.domain_obj, cfg.h)
    st = solve_along(mesh, cfg.H, method=cfg.method)
    conv = classify(st.u) if np.abs(st.u.coef).max() > 0 else None
    stab = stability_report(st, cfg.variations, cfg.seed)
    summary = {
        "config": _config_dict(cfg),
        "state": {"H": st.H, "newton_iters": st.newton_iters, "sup_grad": st.sup_grad,
                  "residual": st.residual, "sup_u": float(np.abs(st.u.coef).max()),
                  "n_nodes": mesh.n_nodes},
        "convexity": conv.to_dict() if conv else None,
        "stability": stab.to_dict(),
    }
    if cfg.dq_check:
        tab = difference_quotient_check(mesh, cfg.H)
        summary["dq_check"] = {"deltas": list(tab.deltas), "errors": list(tab.errors),
                               "slope": tab.slope}
    out = _out_dir(cfg)
    if out is not None:
        io.export_state(st, out)
        io.write_stability_table(out / "stability.csv", stab.d2J_samples)
    _emit(summary, out)
    return 0


def cmd_flow(cfg: RunConfig) -> int:
    mesh = triangulate(cfg.domain_obj, cfg.h)
    stop = StopCriteria(cfg.H_target, cfg.grad_cap, cfg.dH_min)
    tr = continue_flow(mesh, cfg.direction, cfg.dH, stop, cfg.method,
                       diagnostics=cfg.diagnostics, threads=cfg.threads)
    summary = {
        "config": _config_dict(cfg),
        "rows": len(tr.rows),
        "termination": tr.termination,
        "H_last": tr.rows[-1].H,
        "W_last": tr.rows[-1].W,
        "monotonicity_violations": tr.monotonicity_violations(),
    }
    out = _out_dir(cfg)
    if out is not None:
        io.write_trace(out / "trace.csv", tr)
    _emit(summary, out)
    return 0


def cmd_hmax(cfg: RunConfig) -> int:
    mesh = triangulate(cfg.domain_obj, cfg.h)
    lo, hi = estimate_hmax(mesh, cfg.tol, cfg.grad_cap, cfg.dH, cfg.method)
    summary = {"config": _config_dict(cfg), "bracket": [lo, hi],
               "isoperimetric_bound": mesh.domain.isoperimetric_bound}
    _emit(summary, _out_dir(cfg))
    return 0


def cmd_diagnose(cfg: RunConfig) -> int:
    mesh = triangulate(cfg.domain_obj, cfg.h)
    st = solve_along(mesh, cfg.H, method=cfg.method)
    if np.abs(st.u.coef).max() == 0:
        raise ConfigError("diagnose needs H != 0 (u vanishes identically at H = 0)")
    jet = RecoveredJet.of(st.u)
    out = _out_dir(cfg)
    cps = find_critical_points(st.u, jet)
    nodal = []
    for th in cfg.thetas:
        ns = nodal_set(st.u, th, jet)
        nodal.append({"theta": th, "n_points": len(ns.polyline), "simple": ns.simple,
                      "endpoint_error": ns.endpoint_error,
                      "min_grad_of_derivative": ns.min_grad_of_derivative,
                      "boundary_identity": [list(p) for p in ns.boundary_identity]})
        if out is not None:
            io.write_polyline(out / f"nodal_{th:.4f}.csv", ns.polyline)
    rot = []
    if cps:
        x0 = cps[0].location
        r = 0.5 * mesh.domain.centroid_clearance
        for start in (x0 + [r, 0.0], x0 + [0.0, r]):
            res = rotation_flow(st.u, start, cfg.tau, 1000, jet)
            rot.append({"start": [float(v) for v in start], "tau": cfg.tau, "drift": res.drift,
                        "consistency": res.consistency})
    summary = {
        "config": _config_dict(cfg),
        "H": st.H,
        "critical_points": [{"location": [float(v) for v in c.location],
                             "hessian": c.hessian.tolist(), "nondegenerate": c.nondegenerate}
                            for c in cps],
        "nodal_sets": nodal,
        "rotation": rot,
    }
    if out is not None:
        io.export_state(st, out)
    _emit(summary, out)
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    from .acceptance import Lab, run_all

    lab = Lab(h=cfg.h, seed=cfg.seed, n_variations=cfg.variations)
    results = run_all(lab, only=cfg.only, echo=lambda s: print(s, flush=True))
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    out = _out_dir(cfg)
    if out is not None:
        io.write_json(out / "summary.json", {
            "config": _config_dict(cfg),
            "results": [{"number": r.number, "name": r.name, "passed": r.passed,
                         "detail": r.detail} for r in results]})
    return 0 if passed == len(results) else 3


HANDLERS = {"solve": cmd_solve, "flow": cmd_flow, "hmax": cmd_hmax,
            "diagnose": cmd_diagnose, "verify": cmd_verify}


def _fail(kind: str, exc: Exception, code: int) -> int:
    json.dump({"error": kind, "type": type(exc).__name__, "message": str(exc)}, sys.stderr)
    sys.stderr.write("\n")
    return code


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        cfg = load_config(argv)
    except ConfigError as exc:
        return _fail("config", exc, 1)
    try:
        return HANDLERS[cfg.command](cfg)
    except (ConfigError, IsoperimetricViolation) as exc:
        return _fail("config", exc, 1)
    except SOLVER_ERRORS as exc:
        return _fail("solver", exc, 2)
    except OSError as exc:
        return _fail("io", exc, 2)


def main() -> None:
    sys.exit(run())
