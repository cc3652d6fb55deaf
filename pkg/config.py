"""
config.py

Run configuration: an INI file with sections

    [problem]   domain, control, observation, beta, horizon, target, initial,
                nonlinearity, exponent, coefficient, table_y, table_f
    [disc]      nx, nt, dt              (nt wins over dt when both are set)
    [optimizer] stepsize_mode, stepsize, max_iters, grad_tol, restarts, log_every
    [steady]    stepsize, max_iters, grad_tol, log_every
    [turnpike]  delta, window, floor_factor, kappa, tau
    [sweep]     horizons, jobs
    [output]    every
    [run]       out, seed

Every key has a default, so an empty file gives the reference instance.
Intervals and lists are comma separated; profiles are constants or
expressions in x. Unknown keys and violated hypotheses are collected and
raised together as one ConfigError.
"""
from __future__ import annotations

import configparser
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from errors import ConfigError
from optimize import STEPSIZE_MODES, OptimizerOptions
from problem import (Discretization, Nonlinearity, Profile, ProblemSpec, validate_discretization,
                     validate_spec)
from steady import SteadyOptions
from turnpike import TurnpikeOptions

MAX_SNAPSHOTS = 500

DEFAULTS: Dict[str, Dict[str, str]] = {
    "problem": {
        "domain": "0, 1",
        "control": "0, 0.5",
        "observation": "0, 1",
        "beta": "1000",
        "horizon": "5",
        "target": "1",
        "initial": "10",
        "nonlinearity": "power",
        "exponent": "3",
        "coefficient": "1",
        "table_y": "",
        "table_f": "",
    },
    "disc": {"nx": "100", "nt": "", "dt": "1e-4"},
    "optimizer": {
        "stepsize_mode": "auto",
        "stepsize": "0",
        "max_iters": "2000",
        "grad_tol": "1e-6",
        "restarts": "5",
        "log_every": "50",
    },
    "steady": {"stepsize": "1", "max_iters": "5000", "grad_tol": "1e-7", "log_every": "200"},
    "turnpike": {"delta": "auto", "window": "auto", "floor_factor": "2", "kappa": "10", "tau": "auto"},
    "sweep": {"horizons": "2, 4, 8, 16", "jobs": "1"},
    "output": {"every": "auto"},
    "run": {"out": "runs/default", "seed": "0"},
}


# ============================================================================
# Value parsers
# ============================================================================

def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _interval(text: str) -> Tuple[float, float]:
    values = _floats(text)
    if len(values) != 2:
        raise ValueError(f"expected two comma-separated numbers, got '{text}'")
    return values


def _auto_float(text: str) -> Optional[float]:
    return None if text.strip().lower() in ("", "auto") else float(text)


class _Reader:
    """Typed access to a parsed INI that records every failure instead of raising."""

    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser
        self.violations: List[str] = []

    def get(self, section: str, key: str, convert: Callable[[str], object]):
        raw = self.parser.get(section, key, fallback=DEFAULTS[section][key]).strip()
        try:
            return convert(raw)
        except (TypeError, ValueError) as e:
            self.violations.append(f"{section}.{key} = '{raw}' is invalid: {e}")
            return convert(DEFAULTS[section][key]) if raw != DEFAULTS[section][key] else None


# ============================================================================
# Run configuration
# ============================================================================

@dataclass
class RunConfig:
    spec: ProblemSpec
    disc: Discretization
    optimizer: OptimizerOptions = field(default_factory=OptimizerOptions)
    steady: SteadyOptions = field(default_factory=SteadyOptions)
    turnpike: TurnpikeOptions = field(default_factory=TurnpikeOptions)
    horizons: Tuple[float, ...] = (2.0, 4.0, 8.0, 16.0)
    jobs: int = 1
    every: int = 0
    out: str = "runs/default"
    seed: int = 0
    source: str = ""

    @property
    def dt(self) -> float:
        return self.disc.dt(self.spec)

    @property
    def stride(self) -> int:
        """Snapshot stride for trajectory CSVs."""
        if self.every > 0:
            return self.every
        return max(1, math.ceil((self.disc.nt + 1) / MAX_SNAPSHOTS))

    def as_dict(self) -> dict:
        return {
            "source": self.source,
            "problem": self.spec.as_dict(),
            "disc": self.disc.as_dict(self.spec),
            "optimizer": asdict(self.optimizer),
            "steady": asdict(self.steady),
            "turnpike": asdict(self.turnpike),
            "sweep": {"horizons": list(self.horizons), "jobs": self.jobs},
            "output": {"every": self.stride},
            "run": {"out": self.out, "seed": self.seed},
        }


def load_config(path: Optional[str], out: Optional[str] = None, jobs: Optional[int] = None) -> RunConfig:
    """Read, resolve and validate a run configuration; None loads the defaults."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_dict(DEFAULTS)
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}", [f"cannot read {path}"])
        try:
            with open(path, "r", encoding="utf-8") as f:
                parser.read_file(f)
        except configparser.Error as e:
            raise ConfigError(f"cannot parse {path}: {e}", [str(e)]) from e

    r = _Reader(parser)
    for section in parser.sections():
        if section not in DEFAULTS:
            r.violations.append(f"unknown section [{section}]")
            continue
        for key in parser[section]:
            if key not in DEFAULTS[section]:
                r.violations.append(f"unknown key {section}.{key}")

    kind = r.get("problem", "nonlinearity", str).lower()
    if kind == "zero":
        nonlinearity = Nonlinearity.zero()
    else:
        nonlinearity = Nonlinearity(
            kind=kind,
            exponent=r.get("problem", "exponent", float),
            coefficient=r.get("problem", "coefficient", float),
            table_y=r.get("problem", "table_y", _floats),
            table_f=r.get("problem", "table_f", _floats),
        )
    spec = ProblemSpec(
        domain=r.get("problem", "domain", _interval),
        control=r.get("problem", "control", _interval),
        observation=r.get("problem", "observation", _interval),
        beta=r.get("problem", "beta", float),
        horizon=r.get("problem", "horizon", float),
        target=Profile(r.get("problem", "target", str)),
        initial=Profile(r.get("problem", "initial", str)),
        nonlinearity=nonlinearity,
    )

    nx = r.get("disc", "nx", int)
    nt = r.get("disc", "nt", lambda s: int(s) if s else None)
    dt = r.get("disc", "dt", float)
    if nt is None and not (dt and dt > 0.0):
        r.violations.append(f"disc.dt must be > 0 when disc.nt is not set (got {dt})")
        dt = float(DEFAULTS["disc"]["dt"])
    if nt is not None:
        disc = Discretization(nx=nx, nt=nt)
    elif spec.horizon > 0.0:
        disc = Discretization.from_dt(spec, nx, dt)
    else:
        disc = Discretization(nx=nx, nt=1)

    optimizer = OptimizerOptions(
        stepsize_mode=r.get("optimizer", "stepsize_mode", str),
        stepsize=r.get("optimizer", "stepsize", float),
        max_iters=r.get("optimizer", "max_iters", int),
        grad_tol=r.get("optimizer", "grad_tol", float),
        restarts=r.get("optimizer", "restarts", int),
        log_every=r.get("optimizer", "log_every", int),
    )
    steady = SteadyOptions(
        stepsize=r.get("steady", "stepsize", float),
        max_iters=r.get("steady", "max_iters", int),
        grad_tol=r.get("steady", "grad_tol", float),
        log_every=r.get("steady", "log_every", int),
    )
    turnpike = TurnpikeOptions(
        delta=r.get("turnpike", "delta", _auto_float),
        window=r.get("turnpike", "window", _auto_float),
        floor_factor=r.get("turnpike", "floor_factor", float),
        kappa=r.get("turnpike", "kappa", float),
        tau=r.get("turnpike", "tau", _auto_float),
    )
    if turnpike.tau is None:
        # auto switch time, always inside (0, T)
        turnpike.tau = min(1.0, 0.5 * spec.horizon) if spec.horizon > 0.0 else 1.0
    every_raw = r.get("output", "every", lambda s: 0 if s.lower() in ("", "auto") else int(s))

    cfg = RunConfig(
        spec=spec,
        disc=disc,
        optimizer=optimizer,
        steady=steady,
        turnpike=turnpike,
        horizons=r.get("sweep", "horizons", _floats),
        jobs=jobs if jobs is not None else r.get("sweep", "jobs", int),
        every=every_raw or 0,
        out=out if out is not None else r.get("run", "out", str),
        seed=r.get("run", "seed", int),
        source=path or "<defaults>",
    )

    violations = r.violations + validate_spec(spec) + validate_discretization(disc)
    violations += _check_options(cfg)
    if violations:
        raise ConfigError(f"{len(violations)} configuration problem(s) in {cfg.source}", violations)
    return cfg


def _check_options(cfg: RunConfig) -> List[str]:
    out: List[str] = []
    opt = cfg.optimizer
    if opt.stepsize_mode not in STEPSIZE_MODES:
        out.append(f"optimizer.stepsize_mode '{opt.stepsize_mode}' is not one of {', '.join(STEPSIZE_MODES)}")
    if opt.stepsize_mode == "fixed" and not (opt.stepsize and opt.stepsize > 0.0):
        out.append(f"optimizer.stepsize must be > 0 in fixed mode (got {opt.stepsize})")
    if opt.grad_tol is not None and not opt.grad_tol > 0.0:
        out.append(f"optimizer.grad_tol must be > 0 (got {opt.grad_tol})")
    if cfg.steady.grad_tol is not None and not cfg.steady.grad_tol > 0.0:
        out.append(f"steady.grad_tol must be > 0 (got {cfg.steady.grad_tol})")
    tp = cfg.turnpike
    if tp.delta is not None and not tp.delta > 0.0:
        out.append(f"turnpike.delta must be > 0 or auto (got {tp.delta})")
    if tp.tau is not None and not 0.0 < tp.tau < cfg.spec.horizon:
        out.append(f"turnpike.tau must lie in (0, T={cfg.spec.horizon}) (got {tp.tau})")
    if tp.kappa is not None and tp.kappa < 0.0:
        out.append(f"turnpike.kappa must be >= 0 (got {tp.kappa})")
    if not cfg.horizons or any(not T > 0.0 for T in cfg.horizons):
        out.append(f"sweep.horizons must be a nonempty list of positive times (got {list(cfg.horizons)})")
    if cfg.jobs is not None and cfg.jobs < 1:
        out.append(f"sweep.jobs must be >= 1 (got {cfg.jobs})")
    return out
