"""Command-line front end: JSON config in, CSV/VTK artifacts out.

Subcommands: run (time integration), mms (manufactured-solution
convergence), cauchy (refinement differences), contract (two-trajectory
uniqueness study), check-forms (operator audit), estimate-constants.
Exit codes: 0 success, 2 config error, 3 solver/numeric error,
4 verification failure.  Every failure prints one ERROR:-prefixed line.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import forms, oracles, solver
from .coefficients import (CoefficientModel, clamped_affine_law, constant_law,
                           tanh_blend_law)
from .mesh import SIDES, build_rectangle_mesh, refine_uniform

CSV_HEADER = ("t,kinetic,thermal,rot_seminorm2,grad_w_norm2,z_L4,w_L4,"
              "Re,Ra,Re_plus_Ra,div_residual,picard_iters")

PROBLEM_NAMES = ("zero", "mms", "cavity_convection")


class ConfigError(ValueError):
    """Carries every schema violation found, not just the first."""

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


# ---------------------------------------------------------------------------
# schema validation (runs before any mesh or matrix is allocated)


def _default_config() -> dict:
    return {
        "mesh": {"nx": 4, "ny": 4, "gamma1_sides": ["left"], "refinements": 0},
        "coefficients": {
            "viscosity": {"kind": "constant", "value": 1.0},
            "conductivity": {"kind": "constant", "value": 1.0},
        },
        "physics": {"beta": 0.0, "gravity": "constant_down",
                    "buoyancy_sign_flag": 1},
        "data": {"problem": "zero"},
        "time": {"dt": 0.01, "t_end": 0.1},
        "solver": {"picard_max": 25, "picard_tol": 1e-10,
                   "picard_enabled": True,
                   "constants": {"c1": 1.0, "c1_prime": 1.0, "d": 1.0}},
        "output": {"directory": ".", "vtk_every": 0,
                   "csv_name": "diagnostics.csv"},
        "study": {"levels": 3, "base_n": 4, "delta": 1e-3},
    }


class _Check:
    def __init__(self):
        self.errors = []

    def fail(self, path, message):
        self.errors.append(f"{path}: {message}")

    def section(self, raw, path, allowed):
        if not isinstance(raw, dict):
            self.fail(path, f"must be an object, got {type(raw).__name__}")
            return False
        for key in sorted(set(raw) - set(allowed)):
            self.fail(f"{path}.{key}", "unknown key")
        return True

    def number(self, raw, path, key, lo=None, hi=None, strict_lo=False,
               integer=False):
        if key not in raw:
            return
        val = raw[key]
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self.fail(f"{path}.{key}", f"must be a number, got {val!r}")
            return
        if integer and not (isinstance(val, int) or float(val).is_integer()):
            self.fail(f"{path}.{key}", f"must be an integer, got {val!r}")
            return
        if not math.isfinite(val):
            self.fail(f"{path}.{key}", "must be finite")
            return
        if lo is not None and (val <= lo if strict_lo else val < lo):
            op = ">" if strict_lo else ">="
            self.fail(f"{path}.{key}", f"must be {op} {lo}, got {val!r}")
        if hi is not None and val > hi:
            self.fail(f"{path}.{key}", f"must be <= {hi}, got {val!r}")


def _validate_law(chk: _Check, raw, path):
    by_kind = {
        "constant": {"value"},
        "clamped_affine": {"intercept", "slope", "lo", "hi"},
        "tanh_blend": {"lo", "hi"},
    }
    if not isinstance(raw, dict):
        chk.fail(path, "must be an object")
        return
    kind = raw.get("kind")
    if kind not in by_kind:
        chk.fail(f"{path}.kind",
                 f"must be one of {sorted(by_kind)}, got {kind!r}")
        return
    allowed = by_kind[kind] | {"kind"}
    chk.section(raw, path, allowed)
    for key in sorted(by_kind[kind] - set(raw)):
        chk.fail(f"{path}.{key}", f"required for kind {kind!r}")
    chk.number(raw, path, "value", lo=0.0, strict_lo=True)
    chk.number(raw, path, "intercept")
    chk.number(raw, path, "slope")
    chk.number(raw, path, "lo", lo=0.0, strict_lo=True)
    chk.number(raw, path, "hi", lo=0.0, strict_lo=True)
    if ("lo" in raw and "hi" in raw
            and isinstance(raw["lo"], (int, float))
            and isinstance(raw["hi"], (int, float))
            and not isinstance(raw["lo"], bool)
            and not isinstance(raw["hi"], bool)
            and raw["hi"] < raw["lo"]):
        chk.fail(f"{path}.hi", "must be >= lo")


def validate_config(raw) -> dict:
    """Check the entire document, collect all violations, merge defaults."""
    chk = _Check()
    cfg = _default_config()
    if not isinstance(raw, dict):
        raise ConfigError("top level: must be a JSON object")
    chk.section(raw, "config", set(cfg))

    mesh = raw.get("mesh", {})
    if chk.section(mesh, "mesh", {"nx", "ny", "gamma1_sides", "refinements"}):
        chk.number(mesh, "mesh", "nx", lo=1, integer=True)
        chk.number(mesh, "mesh", "ny", lo=1, integer=True)
        chk.number(mesh, "mesh", "refinements", lo=0, hi=6, integer=True)
        sides = mesh.get("gamma1_sides")
        if sides is not None:
            if (not isinstance(sides, list) or not sides
                    or not all(isinstance(s, str) for s in sides)):
                chk.fail("mesh.gamma1_sides", "must be a non-empty string list")
            else:
                for s in sides:
                    if s not in SIDES:
                        chk.fail("mesh.gamma1_sides",
                                 f"unknown side {s!r} (choose from {SIDES})")
                if set(sides) == set(SIDES):
                    chk.fail("mesh.gamma1_sides",
                             "at least one side must remain GAMMA2")

    coeff = raw.get("coefficients", {})
    if chk.section(coeff, "coefficients", {"viscosity", "conductivity"}):
        for name in ("viscosity", "conductivity"):
            if name in coeff:
                _validate_law(chk, coeff[name], f"coefficients.{name}")

    phys = raw.get("physics", {})
    if chk.section(phys, "physics", {"beta", "gravity", "buoyancy_sign_flag"}):
        chk.number(phys, "physics", "beta", lo=0.0)
        grav = phys.get("gravity")
        if grav is not None and grav != "constant_down":
            ok = (isinstance(grav, list) and len(grav) == 2
                  and all(isinstance(c, (int, float)) and not isinstance(c, bool)
                          and math.isfinite(c) for c in grav))
            if not ok:
                chk.fail("physics.gravity",
                         'must be "constant_down" or a finite 2-vector')
        flag = phys.get("buoyancy_sign_flag")
        if flag is not None and flag not in (1, -1):
            chk.fail("physics.buoyancy_sign_flag", f"must be 1 or -1, got {flag!r}")

    data = raw.get("data", {})
    if chk.section(data, "data", {"problem"}):
        prob = data.get("problem")
        if prob is not None and prob not in PROBLEM_NAMES:
            chk.fail("data.problem",
                     f"must be one of {PROBLEM_NAMES}, got {prob!r}")

    tsec = raw.get("time", {})
    if chk.section(tsec, "time", {"dt", "t_end"}):
        chk.number(tsec, "time", "dt", lo=0.0, strict_lo=True)
        chk.number(tsec, "time", "t_end", lo=0.0, strict_lo=True)
        dt, t_end = tsec.get("dt"), tsec.get("t_end")
        if (isinstance(dt, (int, float)) and isinstance(t_end, (int, float))
                and not isinstance(dt, bool) and not isinstance(t_end, bool)
                and dt > 0 and t_end > 0 and dt > t_end * (1 + 1e-12)):
            chk.fail("time.dt", "must not exceed time.t_end")

    solv = raw.get("solver", {})
    if chk.section(solv, "solver",
                   {"picard_max", "picard_tol", "picard_enabled", "constants"}):
        chk.number(solv, "solver", "picard_max", lo=1, integer=True)
        chk.number(solv, "solver", "picard_tol", lo=0.0, strict_lo=True)
        if "picard_enabled" in solv and not isinstance(solv["picard_enabled"], bool):
            chk.fail("solver.picard_enabled", "must be true or false")
        cst = solv.get("constants")
        if cst is not None and cst != "estimate":
            if chk.section(cst, "solver.constants", {"c1", "c1_prime", "d"}):
                for key in ("c1", "c1_prime", "d"):
                    chk.number(cst, "solver.constants", key, lo=0.0,
                               strict_lo=True)

    out = raw.get("output", {})
    if chk.section(out, "output", {"directory", "vtk_every", "csv_name"}):
        chk.number(out, "output", "vtk_every", lo=0, integer=True)
        for key in ("directory", "csv_name"):
            if key in out and (not isinstance(out[key], str) or not out[key]):
                chk.fail(f"output.{key}", "must be a non-empty string")

    study = raw.get("study", {})
    if chk.section(study, "study", {"levels", "base_n", "delta"}):
        chk.number(study, "study", "levels", lo=1, integer=True)
        chk.number(study, "study", "base_n", lo=1, integer=True)
        chk.number(study, "study", "delta", lo=0.0)

    if chk.errors:
        raise ConfigError(chk.errors)

    for section, values in raw.items():
        if isinstance(values, dict) and section != "coefficients":
            cfg[section].update(values)
    if "coefficients" in raw:
        for name in ("viscosity", "conductivity"):
            if name in raw["coefficients"]:
                cfg["coefficients"][name] = raw["coefficients"][name]
    return cfg


def load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return validate_config(raw)


# ---------------------------------------------------------------------------
# builders


def _build_law(raw):
    kind = raw["kind"]
    if kind == "constant":
        return constant_law(raw["value"])
    if kind == "clamped_affine":
        return clamped_affine_law(raw["intercept"], raw["slope"],
                                  raw["lo"], raw["hi"])
    return tanh_blend_law(raw["lo"], raw["hi"])


def build_model(cfg) -> CoefficientModel:
    return CoefficientModel(
        viscosity=_build_law(cfg["coefficients"]["viscosity"]),
        conductivity=_build_law(cfg["coefficients"]["conductivity"]))


def build_mesh(cfg):
    mcfg = cfg["mesh"]
    mesh = build_rectangle_mesh(int(mcfg["nx"]), int(mcfg["ny"]),
                                gamma1_sides=tuple(mcfg["gamma1_sides"]))
    for _ in range(int(mcfg["refinements"])):
        mesh = refine_uniform(mesh)
    return mesh


def _gravity_value(cfg):
    grav = cfg["physics"]["gravity"]
    return (0.0, -1.0) if grav == "constant_down" else tuple(grav)


def _zero_vec(points, t=0.0):
    return np.zeros(np.asarray(points).shape)


def _zero_scalar(points, t=0.0):
    return np.zeros(np.asarray(points).shape[:-1])


def build_problem(cfg, model: CoefficientModel) -> solver.ProblemData:
    name = cfg["data"]["problem"]
    beta = float(cfg["physics"]["beta"])
    sign = float(cfg["physics"]["buoyancy_sign_flag"])
    g_fn = oracles.as_vector_field(_gravity_value(cfg))
    if name == "mms":
        return oracles.make_mms_problem(model, beta=beta,
                                        g=_gravity_value(cfg),
                                        buoyancy_sign=sign)
    if name == "cavity_convection":
        return solver.ProblemData(
            model=model, beta=beta, g=g_fn,
            f1=_zero_vec, f2=_zero_scalar, v1=_zero_scalar, v2=_zero_scalar,
            z0=lambda pts: np.asarray(oracles.exact_velocity(pts, 0.0),
                                      dtype=float),
            w0=lambda pts: np.asarray(pts)[..., 0]
            * np.sin(np.pi * np.asarray(pts)[..., 1]),
            buoyancy_sign=sign, name=name)
    return solver.ProblemData(
        model=model, beta=beta, g=g_fn,
        f1=_zero_vec, f2=_zero_scalar, v1=_zero_scalar, v2=_zero_scalar,
        z0=lambda pts: np.zeros(np.asarray(pts).shape),
        w0=lambda pts: np.zeros(np.asarray(pts).shape[:-1]),
        buoyancy_sign=sign, name="zero")


def build_solver_config(cfg, constants) -> solver.SolverConfig:
    scfg = cfg["solver"]
    return solver.SolverConfig(
        dt=float(cfg["time"]["dt"]), t_end=float(cfg["time"]["t_end"]),
        picard_max=int(scfg["picard_max"]),
        picard_tol=float(scfg["picard_tol"]),
        picard_enabled=bool(scfg["picard_enabled"]),
        constants_for_re_ra=constants)


def _resolve_constants(cfg, spaces):
    """Returns (constants dict, source string)."""
    raw = cfg["solver"]["constants"]
    if raw == "estimate":
        try:
            return solver.estimate_constants(spaces), "estimated"
        except ValueError as exc:
            raise ConfigError(f"solver.constants: {exc}") from exc
    source = "config" if cfg.get("_constants_given") else "defaults"
    return {k: float(v) for k, v in raw.items()}, source


# ---------------------------------------------------------------------------
# output writers


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_diagnostics_csv(path: str, diagnostics) -> None:
    lines = [CSV_HEADER]
    for diag in diagnostics:
        lines.append(",".join(_fmt(v) for v in diag.csv_values()))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_vtk(path: str, spaces: forms.FunctionSpaces, state) -> None:
    """Legacy ASCII unstructured-grid snapshot with vertex point data."""
    mesh = spaces.mesh
    nv, nt = mesh.num_vertices, mesh.num_triangles
    out = ["# vtk DataFile Version 3.0",
           f"fields at t={state.t:.17g}", "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    for x, y in mesh.vertices:
        out.append(f"{x:.17g} {y:.17g} 0")
    out.append(f"CELLS {nt} {4 * nt}")
    for a, b, c in mesh.triangles:
        out.append(f"3 {a} {b} {c}")
    out.append(f"CELL_TYPES {nt}")
    out.extend(["5"] * nt)
    out.append(f"POINT_DATA {nv}")
    out.append("VECTORS velocity double")
    zx, zy = state.z.values[0::2], state.z.values[1::2]
    for i in range(nv):
        out.append(f"{zx[i]:.17g} {zy[i]:.17g} 0")
    out.append("SCALARS temperature double 1")
    out.append("LOOKUP_TABLE default")
    out.extend(f"{v:.17g}" for v in state.w.values)
    out.append("SCALARS head double 1")
    out.append("LOOKUP_TABLE default")
    out.extend(f"{v:.17g}" for v in state.P.values)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")


def _write_rows(path: str, header, rows) -> None:
    lines = [",".join(header)] if isinstance(header, (list, tuple)) else [header]
    for row in rows:
        lines.append(",".join(_fmt(v) if v is not None else "" for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# drivers


def _cmd_run(cfg, seed: int) -> int:
    mesh = build_mesh(cfg)
    spaces = forms.build_spaces(mesh)
    model = build_model(cfg)
    problem = build_problem(cfg, model)
    constants, source = _resolve_constants(cfg, spaces)
    config = build_solver_config(cfg, constants)

    outdir = cfg["output"]["directory"]
    os.makedirs(outdir, exist_ok=True)
    states, diagnostics = solver.run(spaces, problem, config)

    write_diagnostics_csv(os.path.join(outdir, cfg["output"]["csv_name"]),
                          diagnostics)
    with open(os.path.join(outdir, "constants.json"), "w",
              encoding="utf-8") as fh:
        json.dump({"source": source, **constants}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    every = int(cfg["output"]["vtk_every"])
    if every > 0:
        last = len(states) - 1
        for i, state in enumerate(states):
            if i % every == 0 or i == last:
                write_vtk(os.path.join(outdir, f"fields_{i:06d}.vtk"),
                          spaces, state)
    if any(not d.picard_converged for d in diagnostics):
        print("warning: Picard loop hit its iteration cap in at least one step")
    print(f"run: {config.num_steps} steps on {mesh.num_vertices} vertices "
          f"-> {outdir}")
    return 0


def _cmd_mms(cfg, seed: int) -> int:
    levels = int(cfg["study"]["levels"])
    if levels < 3:
        raise ConfigError("study.levels: need at least 3 levels")
    model = build_model(cfg)
    report = oracles.convergence_study(
        model, levels=levels, dt=float(cfg["time"]["dt"]),
        t_end=float(cfg["time"]["t_end"]), beta=float(cfg["physics"]["beta"]),
        g=_gravity_value(cfg), base_n=int(cfg["study"]["base_n"]),
        gamma1_sides=tuple(cfg["mesh"]["gamma1_sides"]))

    outdir = cfg["output"]["directory"]
    os.makedirs(outdir, exist_ok=True)
    metrics = list(oracles.RATE_TARGETS)
    header = (["level", "n", "h"] + metrics
              + [f"rate_{m}" for m in metrics] + ["wall_clock"])
    rows = []
    for k, lv in enumerate(report.levels):
        rates = [report.rates[m][k - 1] if k else None for m in metrics]
        rows.append([k, lv.n, lv.h] + [lv.errors[m] for m in metrics]
                    + rates + [lv.wall_clock])
    _write_rows(os.path.join(outdir, "report_mms.csv"), header, rows)

    for m in metrics:
        print(f"mms: {m} finest rate {report.rates[m][-1]:.3f} "
              f"(target {report.targets[m]})")
    if not report.passed:
        for msg in report.failures:
            print(f"ERROR: verification: mms: {msg}")
        return 4
    print("mms: PASS")
    return 0


def _cmd_cauchy(cfg, seed: int) -> int:
    levels = int(cfg["study"]["levels"])
    if levels < 3:
        raise ConfigError("study.levels: need at least 3 levels")
    model = build_model(cfg)
    problem = build_problem(cfg, model)
    report = oracles.cauchy_study(
        problem, levels=levels, dt=float(cfg["time"]["dt"]),
        t_end=float(cfg["time"]["t_end"]), base_n=int(cfg["study"]["base_n"]),
        gamma1_sides=tuple(cfg["mesh"]["gamma1_sides"]))

    outdir = cfg["output"]["directory"]
    os.makedirs(outdir, exist_ok=True)
    rows = []
    for k in range(len(report.e_velocity)):
        rows.append([k, report.e_velocity[k], report.e_temperature[k],
                     report.ratios_velocity[k - 1] if k else None,
                     report.ratios_temperature[k - 1] if k else None])
    _write_rows(os.path.join(outdir, "report_cauchy.csv"),
                ["pair", "e_velocity", "e_temperature", "ratio_velocity",
                 "ratio_temperature"], rows)

    print(f"cauchy: velocity ratios {[f'{r:.3f}' for r in report.ratios_velocity]}"
          f" temperature ratios {[f'{r:.3f}' for r in report.ratios_temperature]}")
    if not report.passed:
        for msg in report.failures:
            print(f"ERROR: verification: cauchy: {msg}")
        return 4
    print("cauchy: PASS")
    return 0


def _cmd_contract(cfg, seed: int) -> int:
    mesh = build_mesh(cfg)
    spaces = forms.build_spaces(mesh)
    model = build_model(cfg)
    problem = build_problem(cfg, model)
    constants, _ = _resolve_constants(cfg, spaces)
    config = build_solver_config(cfg, constants)
    report = oracles.contraction_study(spaces, problem, config,
                                       delta=float(cfg["study"]["delta"]),
                                       seed=seed)

    outdir = cfg["output"]["directory"]
    os.makedirs(outdir, exist_ok=True)
    rows = []
    for i, t in enumerate(report.times):
        rows.append([t, report.distance[i], report.gronwall_bound[i],
                     report.growth[i - 1] if i else None,
                     report.re_plus_ra[i - 1] if i else None])
    path = os.path.join(outdir, "report_contract.csv")
    lines = [f"# {report.header}",
             "t,distance,gronwall_bound,growth,re_plus_ra"]
    for row in rows:
        lines.append(",".join(_fmt(v) if v is not None else "" for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

    print(f"contract: D(0)={report.distance[0]:.6e} "
          f"D(end)={report.distance[-1]:.6e} monotone={report.monotone} "
          f"gronwall_ok={report.gronwall_ok}")
    if not report.passed:
        for msg in report.failures:
            print(f"ERROR: verification: contract: {msg}")
        return 4
    print("contract: PASS")
    return 0


def _cmd_check_forms(cfg, seed: int, trials: int) -> int:
    spaces = forms.build_spaces(build_mesh(cfg))
    report = oracles.check_forms(spaces, trials=trials, seed=seed)

    outdir = cfg["output"]["directory"]
    os.makedirs(outdir, exist_ok=True)
    rows = [[c.name, c.worst, c.tol, c.passed] for c in report.checks]
    _write_rows(os.path.join(outdir, "report_check-forms.csv"),
                ["name", "worst", "tol", "passed"], rows)

    for c in report.checks:
        print(f"check-forms: {c.name}: worst={c.worst:.3e} "
              f"tol={c.tol:g} {'ok' if c.passed else 'FAIL'}")
    if not report.passed:
        bad = [c.name for c in report.checks if not c.passed]
        print(f"ERROR: verification: check-forms failed: {', '.join(bad)}")
        return 4
    print(f"check-forms: PASS ({len(report.checks)} checks, {trials} trials)")
    return 0


def _cmd_estimate_constants(cfg, seed: int) -> int:
    spaces = forms.build_spaces(build_mesh(cfg))
    constants = solver.estimate_constants(spaces)
    outdir = cfg["output"]["directory"]
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "constants.json"), "w",
              encoding="utf-8") as fh:
        json.dump({"source": "estimated", **constants}, fh, indent=2,
                  sort_keys=True)
        fh.write("\n")
    _write_rows(os.path.join(outdir, "report_estimate-constants.csv"),
                ["c1", "c1_prime", "d"],
                [[constants["c1"], constants["c1_prime"], constants["d"]]])
    print(f"estimate-constants: c1={constants['c1']:.6g} "
          f"c1_prime={constants['c1_prime']:.6g} d={constants['d']:.6g}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing / dispatch


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"ERROR: config: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bgs", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, need_config in (("run", True), ("mms", True), ("cauchy", True),
                              ("contract", True), ("check-forms", False),
                              ("estimate-constants", True)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=need_config,
                       help="path to a JSON configuration file")
        p.add_argument("--seed", type=int, default=42,
                       help="seed for oracle randomness")
        if name == "check-forms":
            p.add_argument("--trials", type=int, default=100)
    return parser


def dispatch(args) -> int:
    if args.config is not None:
        cfg = load_config(args.config)
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
        cfg["_constants_given"] = "constants" in raw.get("solver", {})
    else:
        cfg = _default_config()
        cfg["_constants_given"] = False
    if args.seed < 0:
        raise ConfigError("--seed: must be a non-negative integer")

    if args.command == "run":
        return _cmd_run(cfg, args.seed)
    if args.command == "mms":
        return _cmd_mms(cfg, args.seed)
    if args.command == "cauchy":
        return _cmd_cauchy(cfg, args.seed)
    if args.command == "contract":
        return _cmd_contract(cfg, args.seed)
    if args.command == "check-forms":
        trials = args.trials
        if trials < 0:
            raise ConfigError("--trials: must be >= 0")
        return _cmd_check_forms(cfg, args.seed, trials)
    return _cmd_estimate_constants(cfg, args.seed)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return dispatch(args)
    except ConfigError as exc:
        for msg in exc.messages:
            print(f"ERROR: config: {msg}", file=sys.stderr)
        return 2
    except solver.SolverError as exc:
        print(f"ERROR: solver: {exc}", file=sys.stderr)
        return 3
    except np.linalg.LinAlgError as exc:
        print(f"ERROR: numeric: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"ERROR: config: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
