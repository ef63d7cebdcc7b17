"""Command-line front end: habitgrowth {validate,solve,simulate,evaluate,verify,check}.

Every run is driven by one JSON config file.  Sections other than
``params`` are optional; their defaults are listed in ``SCHEMA`` and echoed
into every JSON artifact so nothing is defaulted silently.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass
from typing import Any

import numpy as np

from . import checks
from .hjb import GridSpec, SolverError, solve_hjb, write_grid_csv, write_metadata_json
from .model import ModelParams, validate_params
from .reduced import GridSpec1D, solve_reduced_1d
from .sde import (
    TimeGrid,
    brownian_pair,
    capital_path_exact,
    feasible_constant_rate_control,
    habit_path_exact,
    lower_bound_strategy,
    uncontrolled_paths,
    write_path_columns,
)
from .utility_mc import McError, evaluate_utility, proportional_recipe, write_estimates_csv
from .verify import FeedbackMap, HomogeneousInterpolant, ProportionalFeedback, moment_probe, simulate_closed_loop, verify

LN01, LN10 = math.log(0.1), math.log(10.0)
REQUIRED = object()

# section -> key -> (kind, default)
SCHEMA: dict[str, dict[str, tuple[str, Any]]] = {
    "params": {k: ("float", REQUIRED) for k in ("B", "rho", "beta1", "beta2", "theta", "sigma", "gamma", "R")},
    "grid": {
        "x_min": ("float", LN01), "x_max": ("float", LN10), "n_x": ("int", 65),
        "y_min": ("float", LN01), "y_max": ("float", LN10), "n_y": ("int", 65),
    },
    "mc": {"n_paths": ("int", 10_000), "t_trunc": ("float?", None), "dt": ("float", 1e-3), "seed": ("int", 42)},
    "solver": {"tol": ("float", 1e-6), "max_iters": ("int", 50)},
    "state": {"k0": ("float", 1.0), "h0": ("float", 1.0)},
    "simulate": {"strategy": ("str", "lower-bound"), "t_end": ("float", 10.0), "nu": ("float?", None),
                 "path_index": ("int", 0)},
    "evaluate": {"control": ("str", "lower-bound"), "nu": ("float?", None), "rate": ("float?", None)},
    "verify": {"n_paths": ("int?", None), "dt": ("float", 1e-2), "t_trunc": ("float?", None),
               "scheme_tol": ("float?", None)},
    "check": {"n_paths": ("int", 1000), "dt": ("float", 2e-2), "n_draws": ("int", 2000)},
    "output_dir": ("str", "out"),
}
STRATEGIES = ("zero", "constant-rate", "lower-bound", "feedback")
CONTROLS = ("lower-bound", "constant-rate", "feedback", "proportional")


class ConfigError(ValueError):
    def __init__(self, key: str, constraint: str):
        super().__init__(f"{key}: {constraint}")
        self.key = key
        self.constraint = constraint


def _coerce(key: str, kind: str, val):
    optional = kind.endswith("?")
    kind = kind.rstrip("?")
    if val is None:
        if optional:
            return None
        raise ConfigError(key, "must not be null")
    if kind == "str":
        if not isinstance(val, str):
            raise ConfigError(key, "must be a string")
        return val
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(key, f"must be a number, got {type(val).__name__}")
    if kind == "int":
        if isinstance(val, float) and not val.is_integer():
            raise ConfigError(key, "must be an integer")
        return int(val)
    if not math.isfinite(val):
        raise ConfigError(key, "must be finite")
    return float(val)


@dataclass
class RunConfig:
    params: ModelParams
    grid: GridSpec
    mc: dict
    solver: dict
    state: dict
    simulate: dict
    evaluate: dict
    verify: dict
    check: dict
    output_dir: str

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "grid": self.grid.to_dict(),
            "mc": dict(self.mc),
            "solver": dict(self.solver),
            "state": dict(self.state),
            "simulate": dict(self.simulate),
            "evaluate": dict(self.evaluate),
            "verify": dict(self.verify),
            "check": dict(self.check),
            "output_dir": self.output_dir,
        }


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    for key in doc:
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key")
    sections = {}
    for name, spec in SCHEMA.items():
        if name == "output_dir":
            continue
        raw = doc.get(name, REQUIRED if name == "params" else {})
        if raw is REQUIRED:
            raise ConfigError(name, "required section missing")
        if not isinstance(raw, dict):
            raise ConfigError(name, "must be an object")
        for key in raw:
            if key not in spec:
                raise ConfigError(f"{name}.{key}", "unknown key")
        out = {}
        for key, (kind, default) in spec.items():
            if key in raw:
                out[key] = _coerce(f"{name}.{key}", kind, raw[key])
            elif default is REQUIRED:
                raise ConfigError(f"{name}.{key}", "required key missing")
            else:
                out[key] = default
        sections[name] = out
    try:
        params = ModelParams(**sections["params"])
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        raise ConfigError(f"params.{msg.split()[0]}", msg) from None
    try:
        grid = GridSpec(**sections["grid"])
    except ValueError as exc:
        raise ConfigError("grid", str(exc)) from None
    mc = sections["mc"]
    if mc["t_trunc"] is None:
        mc["t_trunc"] = 10.0 / params.theta
    _positive("mc.t_trunc", mc["t_trunc"])
    _positive("mc.dt", mc["dt"])
    if mc["n_paths"] < 2:
        raise ConfigError("mc.n_paths", "must be >= 2")
    if not 0 <= mc["seed"] < 2**64:
        raise ConfigError("mc.seed", "must be an unsigned 64-bit integer")
    _positive("solver.tol", sections["solver"]["tol"])
    if sections["solver"]["max_iters"] < 1:
        raise ConfigError("solver.max_iters", "must be >= 1")
    _positive("state.k0", sections["state"]["k0"])
    _positive("state.h0", sections["state"]["h0"])
    sim = sections["simulate"]
    if sim["strategy"] not in STRATEGIES:
        raise ConfigError("simulate.strategy", f"must be one of {', '.join(STRATEGIES)}")
    _positive("simulate.t_end", sim["t_end"])
    ev = sections["evaluate"]
    if ev["control"] not in CONTROLS:
        raise ConfigError("evaluate.control", f"must be one of {', '.join(CONTROLS)}")
    ver = sections["verify"]
    if ver["n_paths"] is None:
        ver["n_paths"] = mc["n_paths"]
    if ver["t_trunc"] is None:
        ver["t_trunc"] = mc["t_trunc"]
    out_dir = doc.get("output_dir", SCHEMA["output_dir"][1])
    if not isinstance(out_dir, str):
        raise ConfigError("output_dir", "must be a string")
    return RunConfig(params, grid, mc, sections["solver"], sections["state"], sim, ev, ver,
                     sections["check"], out_dir)


def _positive(key, val):
    if not val > 0:
        raise ConfigError(key, "must be > 0")


def parse_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("--config", f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from None
    return config_from_dict(doc)


# ----------------------------------------------------------------------------
# subcommands


class StageFailure(RuntimeError):
    def __init__(self, stage: str, detail: dict):
        super().__init__(f"{stage} failed")
        self.stage = stage
        self.detail = detail


def _dump(obj, path):
    with open(path, "w") as fh:
        json.dump(_plain(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else str(float(obj))
    return obj


def _gate(cfg: RunConfig) -> dict:
    rep = validate_params(cfg.params)
    if not rep.passed:
        raise StageFailure("validate", rep.to_dict())
    return rep.to_dict()


def _solve(cfg: RunConfig):
    return solve_hjb(cfg.grid, cfg.params, tol=cfg.solver["tol"], max_iters=cfg.solver["max_iters"])


def cmd_validate(cfg: RunConfig, out: str) -> tuple[int, dict]:
    rep = validate_params(cfg.params).to_dict()
    doc = {"validation": rep, "config": cfg.to_dict()}
    _dump(doc, os.path.join(out, "validation.json"))
    return (0 if rep["passed"] else 1), {"validation": rep}


def cmd_solve(cfg: RunConfig, out: str) -> tuple[int, dict]:
    _gate(cfg)
    res = _solve(cfg)
    write_grid_csv(res, cfg.params, os.path.join(out, "grid.csv"))
    write_metadata_json(res, cfg.params, os.path.join(out, "solve.json"), {"config": _plain(cfg.to_dict())})
    return (0 if res.converged else 1), {"converged": res.converged, "iterations": res.value.iterations,
                                         "residual": res.residual}


def cmd_simulate(cfg: RunConfig, out: str) -> tuple[int, dict]:
    _gate(cfg)
    p, st, sim = cfg.params, cfg.state, cfg.simulate
    grid = TimeGrid.from_dt(sim["t_end"], cfg.mc["dt"])
    noise = brownian_pair(cfg.mc["seed"], grid, sim["path_index"])
    k0, h0 = st["k0"], st["h0"]
    info = {"strategy": sim["strategy"]}
    if sim["strategy"] == "zero":
        k, h = uncontrolled_paths(k0, h0, noise, grid, p)
        c = np.zeros_like(k)
        w1, w2 = noise.w1, noise.w2
    elif sim["strategy"] == "feedback":
        res = _solve(cfg)
        b = simulate_closed_loop(k0, h0, FeedbackMap.from_policy(res.policy, p), grid, cfg.mc["seed"], p,
                                 path_indices=sim["path_index"])
        k, h, c, w1, w2 = b.k, b.h, b.c, b.noise.w1, b.noise.w2
        info["truncated"] = bool(b.flags["truncated"].any())
    else:
        if sim["strategy"] == "lower-bound":
            control = lower_bound_strategy(k0, noise, grid, p)
        else:
            nu = sim["nu"] if sim["nu"] is not None else 0.5 * p.B * k0
            control, feasible = feasible_constant_rate_control(k0, nu, noise, grid, p)
            info.update(nu=nu, feasible=feasible)
        k = capital_path_exact(k0, control, noise, grid, p)
        h = habit_path_exact(h0, control, noise, grid, p)
        c, w1, w2 = control.c, noise.w1, noise.w2
    write_path_columns(os.path.join(out, "path.csv"), grid.times, w1, w2, c, k, h)
    info["config"] = cfg.to_dict()
    _dump(info, os.path.join(out, "simulate.json"))
    return 0, {"strategy": sim["strategy"], "k_T": float(k[-1]), "h_T": float(h[-1])}


def _control_source(cfg: RunConfig):
    p, ev = cfg.params, cfg.evaluate
    if ev["control"] == "lower-bound":
        return lower_bound_strategy
    if ev["control"] == "constant-rate":
        nu = ev["nu"] if ev["nu"] is not None else 0.5 * p.B * cfg.state["k0"]

        def recipe(k0, noise, grid, params):
            return feasible_constant_rate_control(k0, nu, noise, grid, params)[0]

        return recipe
    if ev["control"] == "proportional":
        return proportional_recipe(ev["rate"] if ev["rate"] is not None else 0.5 * p.R)
    return FeedbackMap.from_policy(_solve(cfg).policy, p)


def cmd_evaluate(cfg: RunConfig, out: str) -> tuple[int, dict]:
    _gate(cfg)
    st, mc = cfg.state, cfg.mc
    est = evaluate_utility(st["k0"], st["h0"], _control_source(cfg), t_trunc=mc["t_trunc"],
                           n_paths=mc["n_paths"], seed=mc["seed"], params=cfg.params, dt=mc["dt"])
    write_estimates_csv([(st["k0"], st["h0"], est)], os.path.join(out, "utility.csv"))
    _dump({"estimate": est.to_dict(), "config": cfg.to_dict()}, os.path.join(out, "evaluate.json"))
    return 0, {"mean": est.mean, "std_err": est.std_err}


def cmd_verify(cfg: RunConfig, out: str) -> tuple[int, dict]:
    _gate(cfg)
    p, st, ver = cfg.params, cfg.state, cfg.verify
    res = _solve(cfg)
    tol = ver["scheme_tol"]
    if tol is None:
        fine = solve_hjb(checks.refined(cfg.grid), p, tol=cfg.solver["tol"], max_iters=cfg.solver["max_iters"])
        m = p.homogeneity_degree
        a = HomogeneousInterpolant(res.value.grid, res.value.v, m)(st["k0"], st["h0"])
        b = HomogeneousInterpolant(fine.value.grid, fine.value.v, m)(st["k0"], st["h0"])
        tol = float(2 * abs(a - b))
    rep = verify(res, p, st["k0"], st["h0"], n_paths=ver["n_paths"], dt=ver["dt"], t_trunc=ver["t_trunc"],
                 seed=cfg.mc["seed"], scheme_tol=tol)
    doc = rep.to_dict()
    doc["config"] = cfg.to_dict()
    _dump(doc, os.path.join(out, "verification.json"))
    ok = all(doc["checks"].values())
    return (0 if ok else 1), {"checks": doc["checks"], "v0": doc["v0"], "gap_feedback": doc["gap_feedback"]}


def cmd_check(cfg: RunConfig, out: str) -> tuple[int, dict]:
    p = cfg.params
    results: dict[str, dict] = {}
    results["validate"] = {"pass": True, **_gate(cfg)}
    ck = cfg.check
    d = checks.argmax_deficit(p, n_draws=ck["n_draws"], n_grid=ck["n_draws"], seed=cfg.mc["seed"])
    results["argmax_oracle"] = {"pass": d <= 1e-9, "worst_deficit": d}
    b = checks.branch_continuity_error(p, seed=cfg.mc["seed"])
    results["branch_continuity"] = {"pass": b <= 1e-10, "error": b}
    res = _solve(cfg)
    results["solver_converged"] = {"pass": bool(res.converged), "residual": res.residual}
    sv = checks.sign_violation(res.value)
    results["sign"] = {"pass": sv <= 0.0, "max_v": float(res.value.v.max())}
    mx, my = checks.monotonicity_violation(res.value)
    results["monotonicity"] = {"pass": mx <= 1e-8 and my <= 1e-8, "x_violation": mx, "y_violation": my}
    if abs(cfg.grid.dx - cfg.grid.dy) < 1e-12:
        he = checks.diagonal_homogeneity_error(res.value, p)
        results["homogeneity"] = {"pass": he <= 0.02, "max_rel_error": he}
    red = solve_reduced_1d(GridSpec1D.matching(cfg.grid), p, tol=cfg.solver["tol"])
    ce = checks.cross_solver_error(res, red, p)
    results["cross_solver"] = {"pass": ce <= 0.03, "max_rel_error": ce}
    grid = TimeGrid.from_dt(2.0, 0.01)
    k0, h0 = cfg.state["k0"], cfg.state["h0"]
    if p.B > 0:
        idx = np.arange(ck["n_paths"])
        noise = brownian_pair(cfg.mc["seed"], grid, idx)
        control = lower_bound_strategy(k0, noise, grid, p)
        from .sde import simulate_bundle

        bundle = simulate_bundle(k0, h0, control, noise, p)
    else:
        bundle = simulate_closed_loop(k0, h0, ProportionalFeedback(min(p.R, 0.25 * p.theta), p), grid,
                                      cfg.mc["seed"], p, path_indices=np.arange(ck["n_paths"]))
    mp = moment_probe(bundle, (1, 2, 4), (0.5, 1.0, 2.0), p)
    results["moment_bounds"] = {"pass": not mp.capital_violations, "C": mp.C,
                                "violations": [list(v) for v in mp.capital_violations]}
    fmap = FeedbackMap.from_policy(res.policy, p)
    from .verify import run_identity

    tgrid = TimeGrid.from_dt(cfg.mc["t_trunc"], ck["dt"])
    ident, _ = run_identity(res.value, fmap, k0, h0, tgrid, cfg.mc["seed"], p, ck["n_paths"])
    gap = ident["gap"]
    results["identity_gap"] = {"pass": -3 * gap["se"] <= gap["mean"] <= 3 * gap["se"] + 0.01 * abs(ident["v0"]),
                               **gap}
    ok = all(r["pass"] for r in results.values())
    doc = {"checks": results, "passed": ok, "config": cfg.to_dict()}
    _dump(doc, os.path.join(out, "check.json"))
    return (0 if ok else 1), {name: r["pass"] for name, r in results.items()}


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "verify": cmd_verify,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="habitgrowth", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--output", help="artifact directory (overrides output_dir)")
    ap.add_argument("--seed", type=int, help="override mc.seed (unsigned 64-bit)")
    ap.add_argument("--quiet", action="store_true", help="no summary on stdout")
    return ap


def _error(stage: str, exc: BaseException, extra: dict | None = None) -> None:
    doc = {"stage": stage, "error": type(exc).__name__, "message": str(exc)}
    if extra:
        doc.update(extra)
    sys.stderr.write(json.dumps(_plain(doc), sort_keys=True) + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed", "must be an unsigned 64-bit integer")
            cfg.mc["seed"] = args.seed
        if args.output:
            cfg.output_dir = args.output
        os.makedirs(cfg.output_dir, exist_ok=True)
        if not os.access(cfg.output_dir, os.W_OK):
            raise ConfigError("output_dir", "not writable")
    except ConfigError as exc:
        _error("config", exc, {"key": exc.key})
        return 2
    try:
        with warnings.catch_warnings():
            if args.quiet:
                warnings.simplefilter("ignore")
            code, summary = COMMANDS[args.command](cfg, cfg.output_dir)
    except StageFailure as exc:
        _error(exc.stage, exc, {"detail": exc.detail})
        return 1
    except (SolverError, McError, ValueError) as exc:
        _error(args.command, exc)
        return 1
    if not args.quiet:
        print(json.dumps(_plain({"command": args.command, "exit": code, **summary}), sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
