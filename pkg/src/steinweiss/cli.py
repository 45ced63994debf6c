"""Command-line front end: configuration, orchestration, result manifests.

One JSON config per run; results land in --out as a JSON manifest plus,
for iterative solvers, a per-iteration CSV.  Exit codes: 0 success,
2 validation failure, 3 tolerance breach, 4 non-convergence.  Every
reported number is reproducible from the embedded config and seed.
"""

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np
import jsonschema

from . import __version__
from . import geometry as geo
from . import diagnostics
from .core import (EUCLIDEAN_DIAGONAL, HEISENBERG_DIAGONAL, KernelOperator,
                   SteinWeissParams, admissibility_check, closed_form_extremal,
                   diagonal_params, diagonal_sharp_constant,
                   lieb_loss_upper_bound)
from .grids import build_grid, evaluate_at, GridFunction
from .gridio import load_measure_sequence
from .solver import (maximize, random_init, default_init, seed_from_maximizer,
                     solve_system, NOT_CONVERGED)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_TOLERANCE = 3
EXIT_NONCONVERGENCE = 4

_SPACE_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": [geo.EUCLIDEAN, geo.PRODUCT, geo.HEISENBERG]},
        "n": {"type": "integer", "minimum": 1},
        "m": {"type": "integer", "minimum": 0},
        "weight_kind": {"enum": [geo.FULL_NORM, geo.HORIZONTAL,
                                 geo.PARTIAL_FIRST_FACTOR]},
    },
    "required": ["kind", "n"],
    "additionalProperties": False,
}

_GRID_SCHEMA = {
    "type": "object",
    "properties": {
        "radial_levels": {"type": "integer", "minimum": 4},
        "angular_resolution": {"type": "integer", "minimum": 4},
        "r_min": {"type": "number", "exclusiveMinimum": 0},
        "r_max": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["radial_levels", "angular_resolution", "r_min", "r_max"],
    "additionalProperties": False,
}

_NUM = {"type": "number"}

SCHEMAS = {
    "verify-diagonal": {
        "type": "object",
        "properties": {
            "schema_version": {"const": 1},
            "space": _SPACE_SCHEMA,
            "lambda": _NUM,
            "grid": _GRID_SCHEMA,
            "tolerance_functional": _NUM,
            "tolerance_maximize": _NUM,
            "tol": _NUM,
            "max_iter": {"type": "integer", "minimum": 1},
            "renorm_every": {"type": "integer", "minimum": 0},
            "seed": {"type": "integer"},
        },
        "required": ["schema_version", "space", "lambda", "grid"],
        "additionalProperties": False,
    },
    "maximize": {
        "type": "object",
        "properties": {
            "schema_version": {"const": 1},
            "space": _SPACE_SCHEMA,
            "alpha": _NUM, "beta": _NUM, "lambda": _NUM,
            "p": _NUM, "q_prime": _NUM,
            "grid": _GRID_SCHEMA,
            "tol": _NUM,
            "max_iter": {"type": "integer", "minimum": 1},
            "renorm_every": {"type": "integer", "minimum": 0},
            "init": {"enum": ["bump", "random"]},
            "seed": {"type": "integer"},
        },
        "required": ["schema_version", "space", "alpha", "beta", "lambda",
                     "p", "q_prime", "grid"],
        "additionalProperties": False,
    },
    "solve-system": {
        "type": "object",
        "properties": {
            "schema_version": {"const": 1},
            "space": _SPACE_SCHEMA,
            "alpha": _NUM, "beta": _NUM, "lambda": _NUM,
            "p": _NUM, "q_prime": _NUM,
            "grid": _GRID_SCHEMA,
            "tol": _NUM,
            "max_iter": {"type": "integer", "minimum": 1},
            "maximize_tol": _NUM,
            "maximize_max_iter": {"type": "integer", "minimum": 1},
            "seed": {"type": "integer"},
        },
        "required": ["schema_version", "space", "alpha", "beta", "lambda",
                     "p", "q_prime", "grid"],
        "additionalProperties": False,
    },
    "classify": {
        "type": "object",
        "properties": {
            "schema_version": {"const": 1},
            "sequence": {"type": "string"},
            "grid": _GRID_SCHEMA,
            "epsilon": _NUM,
            "radii": {"type": "array", "items": _NUM, "minItems": 1},
            "max_centers": {"type": ["integer", "null"]},
            "seed": {"type": "integer"},
        },
        "required": ["schema_version", "sequence", "epsilon", "radii"],
        "additionalProperties": False,
    },
    "check-sw": {
        "type": "object",
        "properties": {
            "schema_version": {"const": 1},
            "space": _SPACE_SCHEMA,
            "alpha": _NUM, "beta": _NUM, "lambda": _NUM,
            "p": _NUM, "q_prime": _NUM,
            "t": _NUM,
            "epsilon": _NUM,
            "ball_samples": {"type": "integer", "minimum": 1},
            "cond1_pairs": {"type": "integer", "minimum": 1},
            "cap1": {"type": ["number", "null"]},
            "cap2": {"type": ["number", "null"]},
            "seed": {"type": "integer"},
        },
        "required": ["schema_version", "space", "alpha", "beta", "lambda",
                     "p", "q_prime", "t", "epsilon"],
        "additionalProperties": False,
    },
}


class ValidationFailure(Exception):
    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


def _space_from_config(cfg):
    s = cfg["space"]
    kind = s["kind"]
    wk = s.get("weight_kind")
    if kind == geo.EUCLIDEAN:
        return geo.euclidean(s["n"])
    if kind == geo.PRODUCT:
        return geo.product(s.get("m", 1), s["n"])
    return geo.heisenberg(s["n"], wk or geo.FULL_NORM)


def _grid_from_config(cfg, spec):
    g = cfg["grid"]
    return build_grid(spec, g["radial_levels"], g["angular_resolution"],
                      g["r_min"], g["r_max"])


def _params_from_config(cfg, spec):
    params = SteinWeissParams(spec, cfg["alpha"], cfg["beta"], cfg["lambda"],
                              cfg["p"], cfg["q_prime"])
    report = admissibility_check(params)
    if not report.valid:
        raise ValidationFailure("inadmissible parameters", report.violations)
    return params, report


def _load_config(path, command):
    with open(path) as fh:
        cfg = json.load(fh)
    try:
        jsonschema.validate(cfg, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        raise ValidationFailure("config rejected: %s" % exc.message)
    return cfg


def _write_manifest(out_dir, name, manifest):
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, default=_json_default)
        fh.write("\n")
    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError("not JSON serializable: %r" % type(obj))


def _write_history_csv(out_dir, name, history):
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    fields = ["iteration", "J", "residual", "half_mass_radius", "tail_mass"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in history:
            w.writerow(row)
    return path


def _manifest_skeleton(command, cfg, seed, workers, t0):
    return {
        "tool": "steinweiss",
        "version": __version__,
        "command": command,
        "config": cfg,
        "seed": seed,
        "workers": workers,
        "wall_time_s": round(time.time() - t0, 3),
        "flags": [],
        "results": {},
    }


def _truncation_diagnostics(state, params):
    gJ_vals = state.g.values * state.g.grid.weight_bases ** params.beta
    from .grids import shell_masses
    sm = shell_masses(GridFunction(state.g.grid, gJ_vals), params.p)
    total = sm.sum()
    k = max(1, len(sm) // 10)
    return {
        "inner_mass_fraction": float(sm[:k].sum() / total),
        "outer_mass_fraction": float(sm[-k:].sum() / total),
    }


def cmd_verify_diagonal(cfg, out_dir, seed, workers):
    t0 = time.time()
    spec = _space_from_config(cfg)
    if spec.weight_kind != geo.FULL_NORM:
        raise ValidationFailure("diagonal verification needs the full-norm "
                                "weight kind")
    lam = cfg["lambda"]
    params = diagonal_params(spec, lam)
    report = admissibility_check(params)
    if not report.valid:
        raise ValidationFailure("inadmissible diagonal parameters",
                                report.violations)
    grid = _grid_from_config(cfg, spec)
    op = KernelOperator(grid, params, workers=workers)
    kind = HEISENBERG_DIAGONAL if spec.kind == geo.HEISENBERG \
        else EUCLIDEAN_DIAGONAL
    extremal = closed_form_extremal(kind, spec.n, lam, grid)
    J_ext = op.functional(extremal.values, extremal.values)
    const = diagonal_sharp_constant(kind, spec.n, lam, grid, op)
    state = maximize(params, random_init(grid, seed),
                     tol=cfg.get("tol", 1e-7),
                     max_iter=cfg.get("max_iter", 300),
                     renorm_every=cfg.get("renorm_every", 5), operator=op)
    tol_f = cfg.get("tolerance_functional", 0.05)
    tol_m = cfg.get("tolerance_maximize", 0.05)
    ref = const.authoritative_value if np.isfinite(const.authoritative_value) \
        else J_ext
    dev_f = abs(J_ext - ref) / ref
    dev_m = abs(state.constant_estimate - ref) / ref
    manifest = _manifest_skeleton("verify-diagonal", cfg, seed, workers, t0)
    manifest["flags"] = list(state.flags)
    if const.flag == "SUSPECT":
        manifest["flags"].append("SUSPECT-CLOSED-FORM")
    if spec.kind == geo.EUCLIDEAN:
        bound = lieb_loss_upper_bound(spec.n, lam, params.p, params.q_prime)
        manifest["results"]["lieb_loss_upper_bound"] = bound
        if state.constant_estimate > bound * 1.05:
            manifest["flags"].append("LIEB-LOSS-BOUND-EXCEEDED")
    manifest["results"].update({
        "printed_constant": const.printed_value,
        "printed_constant_flag": const.flag,
        "printed_constant_notes": const.notes,
        "functional_at_extremal": J_ext,
        "quadrature_constant": const.quadrature_value,
        "maximize_estimate": state.constant_estimate,
        "reference_value": ref,
        "functional_rel_deviation": dev_f,
        "maximize_rel_deviation": dev_m,
        "maximize_converged": state.converged,
        "grid_nodes": grid.n_nodes,
        "truncation": _truncation_diagnostics(state, params),
    })
    manifest["wall_time_s"] = round(time.time() - t0, 3)
    _write_manifest(out_dir, "verify_diagonal_manifest.json", manifest)
    _write_history_csv(out_dir, "verify_diagonal_iterates.csv", state.history)
    print(json.dumps(manifest["results"], default=_json_default, indent=2))
    if dev_f > tol_f or dev_m > tol_m:
        return EXIT_TOLERANCE
    if not state.converged:
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def _t_translation_invariance(state, params, op):
    """Relative J change under a vertical translation (horizontal weights
    are t-translation invariant in the continuum)."""
    grid = state.f.grid
    t0 = grid.radii[grid.n_shells // 2] ** 2 * 0.5
    shifted = grid.nodes.copy()
    shifted[:, -1] -= t0
    f_t = GridFunction(grid, evaluate_at(state.f, shifted))
    gJ = GridFunction(grid, state.g.values
                      * grid.weight_bases ** params.beta)
    g_t = GridFunction(grid, evaluate_at(gJ, shifted))
    J0 = op.functional(state.f.values, gJ.values)
    J1 = op.functional(f_t.values, g_t.values)
    return abs(J1 - J0) / J0


def cmd_maximize(cfg, out_dir, seed, workers):
    t0 = time.time()
    spec = _space_from_config(cfg)
    params, report = _params_from_config(cfg, spec)
    grid = _grid_from_config(cfg, spec)
    op = KernelOperator(grid, params, workers=workers)
    init = random_init(grid, seed) if cfg.get("init") == "random" \
        else default_init(grid)
    state = maximize(params, init, tol=cfg.get("tol", 1e-8),
                     max_iter=cfg.get("max_iter", 500),
                     renorm_every=cfg.get("renorm_every", 5), operator=op)
    manifest = _manifest_skeleton("maximize", cfg, seed, workers, t0)
    manifest["flags"] = list(state.flags)
    manifest["results"] = {
        "constant_estimate": state.constant_estimate,
        "existence_regime": report.existence_regime,
        "residual": state.residual,
        "iterations": state.iterations,
        "converged": state.converged,
        "half_mass_radius": state.half_mass_radii[-1]
        if state.half_mass_radii else None,
        "grid_nodes": grid.n_nodes,
        "truncation": _truncation_diagnostics(state, params),
    }
    if spec.kind != geo.HEISENBERG:
        rep = diagnostics.symmetry_check(state.g)
        manifest["results"]["symmetry"] = {
            "first_factor_asymmetry": rep.first_factor_asymmetry,
            "second_factor_center": rep.second_factor_center,
            "second_factor_asymmetry": rep.second_factor_asymmetry,
            "monotonicity_defect": rep.monotonicity_defect,
        }
    if spec.weight_kind == geo.HORIZONTAL:
        manifest["results"]["t_translation_invariance_rel_change"] = \
            _t_translation_invariance(state, params, op)
    manifest["wall_time_s"] = round(time.time() - t0, 3)
    _write_manifest(out_dir, "maximize_manifest.json", manifest)
    _write_history_csv(out_dir, "maximize_iterates.csv", state.history)
    print(json.dumps(manifest["results"], default=_json_default, indent=2))
    return EXIT_OK if state.converged else EXIT_NONCONVERGENCE


def cmd_solve_system(cfg, out_dir, seed, workers):
    t0 = time.time()
    spec = _space_from_config(cfg)
    params, report = _params_from_config(cfg, spec)
    grid = _grid_from_config(cfg, spec)
    op = KernelOperator(grid, params, workers=workers)
    state = maximize(params, default_init(grid),
                     tol=cfg.get("maximize_tol", 1e-8),
                     max_iter=cfg.get("maximize_max_iter", 400), operator=op)
    sysstate = solve_system(params, seed_from_maximizer(state, params),
                            tol=cfg.get("tol", 1e-8),
                            max_iter=cfg.get("max_iter", 400), operator=op)
    manifest = _manifest_skeleton("solve-system", cfg, seed, workers, t0)
    manifest["results"] = {
        "residual_u": sysstate.residuals[0],
        "residual_v": sysstate.residuals[1],
        "multiplier_estimate": sysstate.multiplier_estimate,
        "iterations": sysstate.iterations,
        "converged": sysstate.converged,
        "maximize_constant": state.constant_estimate,
    }
    if spec.kind != geo.HEISENBERG:
        rep = diagnostics.symmetry_check(sysstate.u)
        manifest["results"]["symmetry_u"] = {
            "first_factor_asymmetry": rep.first_factor_asymmetry,
            "monotonicity_defect": rep.monotonicity_defect,
        }
    manifest["wall_time_s"] = round(time.time() - t0, 3)
    _write_manifest(out_dir, "solve_system_manifest.json", manifest)
    print(json.dumps(manifest["results"], default=_json_default, indent=2))
    return EXIT_OK if sysstate.converged else EXIT_NONCONVERGENCE


def cmd_classify(cfg, out_dir, seed, workers):
    t0 = time.time()
    name = cfg["sequence"]
    if name.startswith("bundled:"):
        key = name.split(":", 1)[1]
        if key not in diagnostics.BUNDLED_SEQUENCES:
            raise ValidationFailure("unknown bundled sequence %r" % key)
        gcfg = cfg.get("grid")
        if gcfg is None:
            raise ValidationFailure("bundled sequences need a grid block")
        grid = build_grid(geo.euclidean(1), gcfg["radial_levels"],
                          gcfg["angular_resolution"], gcfg["r_min"],
                          gcfg["r_max"])
        seq = diagnostics.BUNDLED_SEQUENCES[key](grid)
    else:
        seq = load_measure_sequence(name)
    report = diagnostics.concentration_classify(
        seq, cfg["epsilon"], cfg["radii"], cfg.get("max_centers"))
    manifest = _manifest_skeleton("classify", cfg, seed, workers, t0)
    manifest["results"] = {
        "verdict": report.verdict,
        "witnesses": report.witnesses,
        "n_frames": seq.n_frames,
    }
    manifest["wall_time_s"] = round(time.time() - t0, 3)
    _write_manifest(out_dir, "classify_manifest.json", manifest)
    print(json.dumps({"verdict": report.verdict}, indent=2))
    return EXIT_OK


def cmd_check_sw(cfg, out_dir, seed, workers):
    t0 = time.time()
    spec = _space_from_config(cfg)
    params, _ = _params_from_config(cfg, spec)
    try:
        report = diagnostics.sawyer_wheeden_check(
            params, cfg["t"], cfg["epsilon"],
            ball_samples=cfg.get("ball_samples", 200), seed=seed,
            cond1_pairs=cfg.get("cond1_pairs", 10000),
            cap1=cfg.get("cap1"), cap2=cfg.get("cap2"))
    except ValueError as exc:
        raise ValidationFailure(str(exc))
    manifest = _manifest_skeleton("check-sw", cfg, seed, workers, t0)
    manifest["results"] = {
        "cond1_max": report.cond1_max,
        "cond1_closed_form_defect": report.cond1_closed_form_defect,
        "cond1_bound": report.cond1_bound,
        "cond2_max": report.cond2_max,
        "passed": report.passed,
        "exponent_Q_read_as": report.exponent_Q_read_as,
    }
    manifest["wall_time_s"] = round(time.time() - t0, 3)
    _write_manifest(out_dir, "check_sw_manifest.json", manifest)
    print(json.dumps(manifest["results"], indent=2))
    return EXIT_OK if report.passed else EXIT_TOLERANCE


def cmd_selftest(out_dir, seed, workers):
    t0 = time.time()
    rng = np.random.default_rng(seed)
    failures = []
    spec = geo.heisenberg(1)
    u = rng.standard_normal((256, 3))
    v = rng.standard_normal((256, 3))
    w = rng.standard_normal((256, 3))
    assoc = geo.group_mul(geo.group_mul(u, v, spec), w, spec) \
        - geo.group_mul(u, geo.group_mul(v, w, spec), spec)
    if np.max(np.abs(assoc)) > 1e-12:
        failures.append("associativity")
    d1 = geo.left_distance(geo.group_mul(w, u, spec),
                           geo.group_mul(w, v, spec), spec)
    d0 = geo.left_distance(u, v, spec)
    if np.max(np.abs(d1 - d0) / d0) > 1e-10:
        failures.append("left-invariance")
    grid = build_grid(spec, 16, 48, 0.1, 10.0)
    params = diagonal_params(spec, 2.0)
    op = KernelOperator(grid, params, workers=workers)
    ext = closed_form_extremal(HEISENBERG_DIAGONAL, 1, 2.0, grid)
    J = op.functional(ext.values, ext.values)
    if abs(J - 4.0) / 4.0 > 0.15:
        failures.append("coarse diagonal functional (J=%.3f)" % J)
    manifest = {
        "tool": "steinweiss", "version": __version__, "command": "selftest",
        "seed": seed, "failures": failures,
        "wall_time_s": round(time.time() - t0, 3),
    }
    _write_manifest(out_dir, "selftest_manifest.json", manifest)
    print(json.dumps(manifest, indent=2))
    return EXIT_OK if not failures else EXIT_TOLERANCE


COMMANDS = {
    "verify-diagonal": cmd_verify_diagonal,
    "maximize": cmd_maximize,
    "solve-system": cmd_solve_system,
    "classify": cmd_classify,
    "check-sw": cmd_check_sw,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="steinweiss",
        description="Best constants and extremals for doubly weighted "
                    "fractional integral inequalities")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path, default=Path("."))
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--seed", type=int, default=None)
    sp = sub.add_parser("selftest")
    sp.add_argument("--out", type=Path, default=Path("."))
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if args.command == "selftest":
        return cmd_selftest(args.out, args.seed, args.workers)
    try:
        cfg = _load_config(args.config, args.command)
        seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        return COMMANDS[args.command](cfg, args.out, seed, args.workers)
    except ValidationFailure as exc:
        record = {"error": str(exc), "violations": exc.violations}
        print(json.dumps(record), file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, OSError) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
