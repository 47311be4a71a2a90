"""Command-line front end.

    minkowski-caps weights points.json
    minkowski-caps solve config.json [--out-dir DIR] [--level L] [--tol T] [--max-iters N] [--no-assert]
    minkowski-caps sweep config.json [...same flags]
    minkowski-caps export body.json out.obj

Exit codes: 0 all checks pass, 1 a check failed, 2 bad input, 3 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import io
from .errors import InfeasibleEquilibriumError, InputError, MinkowskiCapsError
from .pipeline import (DEFAULT_TOLERANCES, AssertionOutcome, ConstructionConfig, body_assertions,
                       construct, measure, run_sweep)
from .profile import PunctureSet, find_equilibrium_weights
from .solver import SolveOptions

log = logging.getLogger("minkowski_caps")

EXIT_OK, EXIT_ASSERT, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3

_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}

POINTS_SCHEMA = {
    "type": "object",
    "properties": {"points": {"type": "array", "items": _VEC3, "minItems": 2}},
    "required": ["points"],
    "additionalProperties": False,
}

_PUNCTURES = {
    "type": "object",
    "properties": {
        "points": {"type": "array", "items": _VEC3, "minItems": 2},
        "weights": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
    },
    "required": ["points"],
    "additionalProperties": False,
}

_SOLVER = {
    "type": "object",
    "properties": {
        "tol_rel": {"type": "number", "exclusiveMinimum": 0},
        "max_iters": {"type": "integer", "minimum": 1},
        "line_search_shrink": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    },
    "additionalProperties": False,
}

_TOLERANCES = {
    "type": "object",
    "properties": {k: {"type": "number", "minimum": 0} for k in DEFAULT_TOLERANCES},
    "additionalProperties": False,
}

_COMMON = {
    "level": {"type": "integer", "minimum": 0, "maximum": 8},
    "punctures": {"oneOf": [_PUNCTURES, {"type": "null"}]},
    "mode": {"enum": ["discrete", "nominal"]},
    "solver": _SOLVER,
    "tolerances": _TOLERANCES,
    "probes": {"type": "integer", "minimum": 1},
    "seed": {"type": "integer", "minimum": 0},
    "export_obj": {"type": "boolean"},
}

SOLVE_SCHEMA = {
    "type": "object",
    "properties": {**_COMMON, "n": {"type": "integer", "minimum": 1}},
    "additionalProperties": False,
}

SWEEP_SCHEMA = {
    "type": "object",
    "properties": {
        **_COMMON,
        "n_values": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "hausdorff_level": {"type": "integer", "minimum": 0, "maximum": 6},
    },
    "required": ["n_values"],
    "additionalProperties": False,
}

DEFAULTS = {
    "level": 5,
    "punctures": None,
    "mode": "discrete",
    "solver": {"tol_rel": 1e-6, "max_iters": 2000, "line_search_shrink": 0.5},
    "probes": 50,
    "seed": 0,
    "export_obj": True,
}


def validate(data, schema, what: str) -> None:
    try:
        jsonschema.validate(data, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"{what}: {where}: {exc.message}") from None


def load_config(path, schema, args) -> dict:
    """Validated config with defaults and command-line overrides filled in."""
    raw = io.read_json(path)
    validate(raw, schema, str(path))
    cfg = {**DEFAULTS, **raw}
    cfg["solver"] = {**DEFAULTS["solver"], **raw.get("solver", {})}
    cfg["tolerances"] = {**DEFAULT_TOLERANCES, **raw.get("tolerances", {})}
    if args.level is not None:
        cfg["level"] = args.level
    if args.tol is not None:
        cfg["solver"]["tol_rel"] = args.tol
    if args.max_iters is not None:
        cfg["solver"]["max_iters"] = args.max_iters
    validate(cfg, schema, "effective config")
    pz = cfg["punctures"]
    if pz is not None and "weights" not in pz:
        try:
            w = find_equilibrium_weights(pz["points"])
        except InfeasibleEquilibriumError as exc:
            raise InputError(f"punctures: {exc}") from None
        pz = cfg["punctures"] = {**pz, "weights": w.tolist()}
    if pz is not None and cfg.get("n") is None and "n_values" not in cfg:
        raise InputError("a puncture construction needs 'n'")
    return cfg


def _punctures(cfg) -> PunctureSet | None:
    pz = cfg["punctures"]
    return None if pz is None else PunctureSet(pz["points"], pz["weights"])


def _options(cfg) -> SolveOptions:
    return SolveOptions(**cfg["solver"])


def _report_base(command: str, cfg) -> dict:
    return {"command": command, "version": __version__, "config": cfg}


def _finish(report: dict, outcomes: list[AssertionOutcome], out_dir: Path, no_assert: bool) -> int:
    report["assertions"] = [a.to_dict() for a in outcomes]
    report["passed"] = all(a.passed for a in outcomes)
    io.write_json(out_dir / "report.json", report)
    for a in outcomes:
        print(f"{'PASS' if a.passed else 'FAIL'} {a.name}: {a.measured:.6g} vs {a.bound:.6g} ({a.claim})")
    if report["passed"] or no_assert:
        return EXIT_OK
    return EXIT_ASSERT


def cmd_weights(args) -> int:
    data = io.read_json(args.points)
    validate(data, POINTS_SCHEMA, str(args.points))
    try:
        w = find_equilibrium_weights(data["points"])
    except InfeasibleEquilibriumError as exc:
        d = exc.direction
        msg = str(exc)
        if d is not None:
            msg += f"; every point has <p, w> >= 0 for w = ({', '.join(io.fmt(x) for x in d)})"
        print(msg, file=sys.stderr)
        if args.out_dir:
            out = Path(args.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            io.write_json(out / "weights.json", {"feasible": False, "direction": None if d is None else list(d)})
        return EXIT_ASSERT
    print(" ".join(f"{x:.17g}" for x in w))
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        io.write_json(out / "weights.json", {"feasible": True, "points": data["points"], "weights": w})
    return EXIT_OK


def _control_assertions(rec: dict, body, tol_rel: float) -> list[AssertionOutcome]:
    dev = float(np.max(np.abs(body.offsets - 1.0)))
    return [
        AssertionOutcome("residual", "facet areas match f_n w_i", rec["final_residual"], tol_rel,
                         rec["final_residual"] <= tol_rel),
        AssertionOutcome("unit_ball", "kappa = 1 gives the unit sphere", dev, 0.01, dev <= 0.01),
    ]


def cmd_solve(args) -> int:
    cfg = load_config(args.config, SOLVE_SCHEMA, args)
    out = Path(args.out_dir)
    ps = _punctures(cfg)
    n = cfg.get("n") or 1
    report = _report_base("solve", cfg)
    t0 = time.perf_counter()
    try:
        h, d = construct(ps, n, cfg["level"], _options(cfg), cfg["mode"])
    except InputError:
        raise
    except MinkowskiCapsError as exc:
        out.mkdir(parents=True, exist_ok=True)
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        partial = getattr(exc, "report", None)
        if partial is not None:
            report["solver"] = partial.to_dict()
        io.write_json(out / "report.json", report)
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    out.mkdir(parents=True, exist_ok=True)
    rec = measure(d, cfg["tolerances"], cfg["probes"], cfg["seed"])
    rec["wall_time"] = time.perf_counter() - t0
    report["record"] = rec
    report["solver"] = d.report.to_dict()
    if cfg["export_obj"]:
        io.write_obj(d.body, out / "body.obj")
    io.write_json(out / "body.json", io.body_to_dict(d.body))
    io.write_csv(out / "residuals.csv", ["iteration", "residual", "merit"],
                 [(k, r, m) for k, (r, m) in enumerate(zip(d.report.residual_history,
                                                          d.report.merit_history))])
    tol_rel = cfg["solver"]["tol_rel"]
    if ps is None:
        outcomes = _control_assertions(rec, d.body, tol_rel)
    else:
        outcomes = [AssertionOutcome("residual", "facet areas match f_n w_i",
                                     rec["final_residual"], tol_rel, rec["final_residual"] <= tol_rel)]
        outcomes += body_assertions(rec, ps, cfg["tolerances"])
    return _finish(report, outcomes, out, args.no_assert)


def sweep_rows(rep, m: int) -> tuple[list[str], list[list]]:
    header = ["n"] + [f"disc_area_{j}" for j in range(m)] + [
        "hausdorff_prev", "total_area", "bound_rhs", "iterations"]
    rows = []
    for rec in rep.records:
        rows.append([rec["n"], *rec["disc_areas"], rec["hausdorff_prev"], rec["total_area"],
                     rec["bound_rhs"], rec.get("iterations")])
    return header, rows


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, SWEEP_SCHEMA, args)
    cfg.setdefault("hausdorff_level", 4)
    ps = _punctures(cfg)
    config = ConstructionConfig(ps, cfg["n_values"], cfg["level"], _options(cfg),
                                cfg["tolerances"], cfg["mode"], cfg["probes"], cfg["seed"],
                                cfg["hausdorff_level"])
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    rep = run_sweep(config)
    report = _report_base("sweep", cfg)
    report.update(rep.to_dict())
    report["wall_time"] = time.perf_counter() - t0
    header, rows = sweep_rows(rep, 0 if ps is None else len(ps))
    io.write_csv(out / "sweep.csv", header, rows)
    if cfg["export_obj"]:
        for n, d in rep.bodies.items():
            io.write_obj(d.body, out / f"body_n{n}.obj")
    code = _finish(report, rep.assertions, out, args.no_assert)
    if rep.gaps:
        for g in rep.gaps:
            print(f"GAP n={g['n']}: {g['error']}: {g['message']}", file=sys.stderr)
        return EXIT_SOLVER
    return code


def cmd_export(args) -> int:
    P = io.body_from_dict(io.read_json(args.body))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    io.write_obj(P, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="minkowski-caps", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("weights", help="equilibrium weights for a set of unit directions")
    p.add_argument("points", help="JSON file {\"points\": [[x, y, z], ...]}")
    p.add_argument("--out-dir", default=None, help="also write weights.json here")
    p.set_defaults(func=cmd_weights)

    for name, func, help_ in (("solve", cmd_solve, "construct and check one body"),
                              ("sweep", cmd_sweep, "construct bodies for a list of n")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="JSON config")
        p.add_argument("--out-dir", default="out", help="output directory (default: out)")
        p.add_argument("--level", type=int, default=None, help="override grid level")
        p.add_argument("--tol", type=float, default=None, help="override solver tol_rel")
        p.add_argument("--max-iters", type=int, default=None, help="override solver max_iters")
        p.add_argument("--no-assert", action="store_true", help="exit 0 even if checks fail")
        p.set_defaults(func=func)

    p = sub.add_parser("export", help="write an OBJ mesh for a serialized body")
    p.add_argument("body", help="body JSON written by solve")
    p.add_argument("out", help="output .obj path")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except MinkowskiCapsError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
