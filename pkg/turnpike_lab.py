#!/usr/bin/env python3
"""
turnpike-lab command line

    python turnpike_lab.py <command> --config <path> [--out DIR] [--jobs N] [--quiet | --debug]

Commands:
    solve      uncontrolled forward solve            -> trajectory.csv
    steady     steady optimum                        -> steady.json, steady_profiles.csv
    optimize   time-horizon optimum                  -> result.json, cost_history.csv,
                                                        control.csv, state.csv, distance_curves.csv
    turnpike   optimum + turnpike diagnostics        -> turnpike.json, distance_curves.csv,
                                                        norm_curves.csv, cost_history.csv
    sweep      averages sweep over [sweep] horizons  -> sweep.json, sweep.csv
    check      built-in oracle checks                -> check.json

Exit codes: 0 success, 1 failed checks, 2 configuration error,
3 solver or analysis error, 4 optimizer error. Failures also write error.json.
"""

import argparse
import json
import math
import os
import sys
from typing import Iterable, List, Sequence

import numpy as np

import console
import selfcheck
from config import DEFAULTS, RunConfig, load_config
from errors import ConfigError, SolverError, TurnpikeLabError
from grid import Grid
from optimize import gradient_descent, optimality_system_residual, sanity_bounds
from parabolic import Trajectory, scheme_for, solve_forward, time_derivative_l2
from steady import solve_steady_optimum
from turnpike import (TurnpikeOptions, analyze_turnpike, averages_sweep, distance_curves,
                      quasi_optimal_strategy)

COMMANDS = ("solve", "steady", "optimize", "turnpike", "sweep", "check")


# ============================================================================
# Writers
# ============================================================================

def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return f"{float(v):.17g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path: str, data: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_jsonable(data), f, indent=2, ensure_ascii=False)
        f.write("\n")
    console.detail(f"wrote {path}")


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")
    console.detail(f"wrote {path}")


def write_field_csv(path: str, grid: Grid, times: np.ndarray, values: np.ndarray, stride: int) -> None:
    """Long format t,x,value; every `stride`-th snapshot plus the last one."""
    idx = _strided(len(times), stride)

    def rows():
        for k in idx:
            for x, v in zip(grid.x, values[k]):
                yield times[k], x, v

    write_csv(path, ("t", "x", "value"), rows())


def write_trajectory(path: str, traj: Trajectory, stride: int) -> None:
    write_field_csv(path, traj.grid, traj.times, traj.values, stride)


def write_cost_history(path: str, result) -> None:
    write_csv(path, ("iter", "cost", "grad_norm"),
              ((i, c, g) for i, (c, g) in enumerate(zip(result.cost_history, result.grad_norm_history))))


def write_distance_curves(path: str, curves, stride: int) -> None:
    idx = _strided(len(curves.times), stride)
    write_csv(path, ("t", "dy_inf", "du_inf"),
              ((curves.times[k], curves.dy[k], curves.du[k]) for k in idx))


def _strided(n: int, stride: int) -> List[int]:
    idx = list(range(0, n, stride))
    if idx[-1] != n - 1:
        idx.append(n - 1)
    return idx


def _report(cfg: RunConfig, command: str, **sections) -> dict:
    out = {"command": command, "config": cfg.as_dict()}
    out.update(sections)
    return out


# ============================================================================
# Commands
# ============================================================================

def cmd_solve(cfg: RunConfig) -> int:
    spec, disc = cfg.spec, cfg.disc
    console.info(f"Forward solve: nx={disc.nx}, nt={disc.nt}, dt={cfg.dt:.3e}, u = 0")
    traj = solve_forward(spec, disc, np.zeros((disc.nt, disc.nx)))
    sup = traj.sup_norms()
    console.info(f"||y(0)||_inf = {sup[0]:.6g}, ||y(T)||_inf = {sup[-1]:.6g}, "
                 f"||y_t||_L2 = {time_derivative_l2(traj):.6g}")
    write_trajectory(os.path.join(cfg.out, "trajectory.csv"), traj, cfg.stride)
    return 0


def _steady(cfg: RunConfig):
    grid = scheme_for(cfg.spec, cfg.disc).grid
    return solve_steady_optimum(cfg.spec, grid, cfg.steady)


def cmd_steady(cfg: RunConfig) -> int:
    pair = _steady(cfg)
    write_json(os.path.join(cfg.out, "steady.json"), _report(cfg, "steady", steady=pair.as_dict()))
    write_csv(os.path.join(cfg.out, "steady_profiles.csv"), ("x", "u", "y", "q"),
              zip(pair.grid.x, pair.control, pair.state, pair.adjoint))
    return 0


def cmd_optimize(cfg: RunConfig) -> int:
    spec, disc = cfg.spec, cfg.disc
    pair = _steady(cfg)
    result = gradient_descent(spec, disc, None, cfg.optimizer)
    curves = distance_curves(result, pair)
    body = result.as_dict()
    body["optimality_residual"] = optimality_system_residual(spec, disc, result)
    body["sanity"] = sanity_bounds(spec, disc, result, pair)
    write_json(os.path.join(cfg.out, "result.json"),
               _report(cfg, "optimize", result=body, steady=pair.as_dict()))
    write_cost_history(os.path.join(cfg.out, "cost_history.csv"), result)
    write_field_csv(os.path.join(cfg.out, "control.csv"), result.trajectory.grid,
                    result.trajectory.times[:-1], result.control, cfg.stride)
    write_trajectory(os.path.join(cfg.out, "state.csv"), result.trajectory, cfg.stride)
    write_distance_curves(os.path.join(cfg.out, "distance_curves.csv"), curves, cfg.stride)
    return 0


def cmd_turnpike(cfg: RunConfig) -> int:
    spec, disc = cfg.spec, cfg.disc
    pair = _steady(cfg)
    result = gradient_descent(spec, disc, None, cfg.optimizer)
    topts: TurnpikeOptions = cfg.turnpike
    report = analyze_turnpike(spec, disc, result, pair, topts)
    quasi = quasi_optimal_strategy(spec, disc, pair, topts.tau, topts.kappa, optimum=result)

    write_json(os.path.join(cfg.out, "turnpike.json"),
               _report(cfg, "turnpike", turnpike=report.as_dict(), result=result.as_dict(),
                       steady=pair.as_dict(), quasi_optimal=quasi.as_dict()))
    write_distance_curves(os.path.join(cfg.out, "distance_curves.csv"), report.curves, cfg.stride)
    idx = _strided(len(report.curves.times), cfg.stride)
    write_csv(os.path.join(cfg.out, "norm_curves.csv"), ("t", "y_inf", "ybar_inf", "dq_inf"),
              ((report.curves.times[k], report.y_inf[k], report.ybar_inf, report.curves.dq[k]) for k in idx))
    write_cost_history(os.path.join(cfg.out, "cost_history.csv"), result)
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    pair = _steady(cfg)
    table = averages_sweep(cfg.spec, cfg.disc.nx, cfg.dt, cfg.horizons, cfg.optimizer,
                           pair=pair, jobs=cfg.jobs)
    write_json(os.path.join(cfg.out, "sweep.json"), _report(cfg, "sweep", sweep=table.as_dict()))
    write_csv(os.path.join(cfg.out, "sweep.csv"), ("T", "JT", "JT_over_T", "Js", "gap", "yt_l2", "ratio"),
              (row.values() for row in table.rows))
    return 0


def cmd_check(cfg: RunConfig) -> int:
    results = selfcheck.run_checks(cfg.spec, seed=cfg.seed)
    code = selfcheck.print_report(results)
    write_json(os.path.join(cfg.out, "check.json"),
               _report(cfg, "check", checks=[r.as_dict() for r in results],
                       overall="PASS" if code == 0 else "FAIL"))
    return code


HANDLERS = {
    "solve": cmd_solve,
    "steady": cmd_steady,
    "optimize": cmd_optimize,
    "turnpike": cmd_turnpike,
    "sweep": cmd_sweep,
    "check": cmd_check,
}


# ============================================================================
# Entry point
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(description="Semilinear heat-equation control: optima and turnpike diagnostics.")
    ap.add_argument("command", choices=COMMANDS, help="What to run")
    ap.add_argument("--config", default=None, help="INI configuration file (defaults to the reference instance)")
    ap.add_argument("--out", default=None, help="Output directory (overrides [run] out)")
    ap.add_argument("--jobs", type=int, default=None, help="Worker processes for sweep (overrides [sweep] jobs)")
    verbosity = ap.add_mutually_exclusive_group()
    verbosity.add_argument("--quiet", action="store_true", help="Only print errors")
    verbosity.add_argument("--debug", action="store_true", help="Print per-iteration details")
    return ap


def run(command: str, config_path=None, out=None, jobs=None) -> int:
    out_dir = out or DEFAULTS["run"]["out"]
    try:
        cfg = load_config(config_path, out=out, jobs=jobs)
        out_dir = cfg.out
        os.makedirs(cfg.out, exist_ok=True)
        console.banner(f"turnpike-lab {command} ({cfg.source})")
        try:
            return HANDLERS[command](cfg)
        except ValueError as e:
            # numerical routines reject unusable inputs with ValueError
            raise SolverError(str(e)) from e
    except TurnpikeLabError as e:
        console.error(f"{e.kind}: {e.message}")
        if isinstance(e, ConfigError):
            for v in e.violations:
                console.error(f"  - {v}")
        try:
            os.makedirs(out_dir, exist_ok=True)
            write_json(os.path.join(out_dir, "error.json"), {"command": command, **e.to_dict()})
        except OSError as io_err:
            console.error(f"could not write error.json: {io_err}")
        return e.exit_code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.quiet:
        console.set_verbosity(console.QUIET)
    elif args.debug:
        console.set_verbosity(console.DEBUG)
    return run(args.command, args.config, args.out, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
