"""
turnpike.py

Quantitative turnpike diagnostics for a computed time-horizon optimum
against the steady optimum:

- distance_curves              d_y, d_u, d_q per snapshot (sup norms)
- entry_time                   first time ||y(t)||_inf <= delta (T if never)
- fit_exponential_rates        log-linear least squares  d(t) ~ K exp(-mu t)
- analyze_turnpike             the full report: fits, plateau, cost gap, verdict
- averages_sweep               (1/T) inf J_T against J_s over a list of horizons
- representation_decomposition J_T rewritten as steady cost + |y_t|^2 + boundary energy
- quasi_optimal_strategy       approach by feedback, then hold the steady control

All thresholds (delta, fit windows, noise floor) are tunables with recorded
defaults; nothing here is derived from the existence-level constants.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

import console
from errors import AnalysisError, BlowUpError, TurnpikeLabError
from grid import laplacian_apply, norm
from optimize import (CostBreakdown, OptimizationResult, OptimizerOptions, constant_control,
                      evaluate_cost, gradient_descent, sanity_bounds, trajectory_cost)
from parabolic import Trajectory, check_control, scheme_for, suggest_dt, time_derivative_l2
from problem import Discretization, ProblemSpec
from steady import SteadyOptions, SteadyPair, solve_steady_optimum

LOG_FLOOR = 1e-14
MIN_FIT_SAMPLES = 3


# ============================================================================
# Distance curves and entry time
# ============================================================================

@dataclass
class DistanceCurves:
    times: np.ndarray
    dy: np.ndarray
    du: np.ndarray
    dq: np.ndarray


def distance_curves(result: OptimizationResult, pair: SteadyPair) -> DistanceCurves:
    """Sup-norm distances to the steady triple at every snapshot.

    Both controls vanish off w, so the plain sup norm of their difference is
    the L-inf(w) distance. d_u at the final snapshot repeats the last step.
    """
    traj = result.trajectory
    if traj.grid != pair.grid:
        raise ValueError(f"grid mismatch: trajectory on {traj.grid}, steady pair on {pair.grid}")
    dy = norm(traj.grid, traj.values - pair.state, "Linf")
    du_steps = norm(traj.grid, result.control - pair.control, "Linf")
    du = np.append(du_steps, du_steps[-1])
    dq = norm(traj.grid, result.adjoint.values - pair.adjoint, "Linf")
    return DistanceCurves(traj.times, dy, du, dq)


def entry_time(result, delta: float) -> float:
    """inf{t : ||y(t)||_inf <= delta} over the snapshots, T when the set is empty."""
    if not delta > 0.0:
        raise ValueError(f"delta must be > 0 (got {delta})")
    traj: Trajectory = getattr(result, "trajectory", result)
    hits = np.flatnonzero(traj.sup_norms() <= delta)
    if hits.size == 0:
        return traj.horizon
    return float(traj.times[hits[0]])


def default_delta(pair: SteadyPair, y0) -> float:
    """1.1 ||ybar||_inf + 0.05 ||y0||_inf."""
    value = 1.1 * float(np.max(np.abs(pair.state))) + 0.05 * float(np.max(np.abs(y0)))
    return value if value > 0.0 else 1e-12


# ============================================================================
# Exponential rate fits
# ============================================================================

@dataclass
class ExponentialFit:
    K: float
    mu: float
    residual: float
    samples: int
    clipped: bool
    window: Tuple[float, float]

    def as_dict(self) -> dict:
        return {"K": self.K, "mu": self.mu, "residual": self.residual, "samples": self.samples,
                "clipped": self.clipped, "window": list(self.window)}


def fit_exponential_rates(t, d, window: Optional[Tuple[float, float]] = None) -> ExponentialFit:
    """Least-squares line through log d(t) on the window: K = exp(intercept), mu = -slope."""
    t = np.asarray(t, dtype=float)
    d = np.asarray(d, dtype=float)
    if t.shape != d.shape or t.ndim != 1:
        raise ValueError(f"time and series shapes differ: {t.shape} vs {d.shape}")
    lo, hi = window if window is not None else (float(t[0]), float(t[-1]))
    slack = 1e-9 * max(1.0, abs(lo), abs(hi))
    sel = (t >= lo - slack) & (t <= hi + slack)
    n = int(np.count_nonzero(sel))
    if n < MIN_FIT_SAMPLES:
        raise ValueError(f"fit window [{lo:.4g}, {hi:.4g}] holds {n} samples, need at least {MIN_FIT_SAMPLES}")

    ts, ds = t[sel], d[sel]
    clipped = bool(np.any(ds < LOG_FLOOR))
    log_d = np.log(np.maximum(ds, LOG_FLOOR))
    # centred abscissa keeps the normal equations well conditioned
    t_mid = float(np.mean(ts))
    A = np.column_stack([np.ones(n), ts - t_mid])
    coef, *_ = np.linalg.lstsq(A, log_d, rcond=None)
    slope = float(coef[1])
    intercept = float(coef[0]) - slope * t_mid
    misfit = log_d - A @ coef
    return ExponentialFit(
        K=math.exp(intercept),
        mu=-slope + 0.0,
        residual=math.sqrt(float(np.mean(misfit * misfit))),
        samples=n,
        clipped=clipped,
        window=(float(ts[0]), float(ts[-1])),
    )


def _fit_window(d: np.ndarray, start: int, stop: int, floor: float) -> Tuple[int, int]:
    """[start, end) cut where d first drops to the noise floor, >= 3 samples."""
    n = len(d)
    start = min(start, max(n - MIN_FIT_SAMPLES, 0))
    stop = max(min(stop, n), start + MIN_FIT_SAMPLES)
    below = np.flatnonzero(d[start:stop] <= floor)
    end = start + int(below[0]) + 1 if below.size else stop
    return start, min(max(end, start + MIN_FIT_SAMPLES), n)


# ============================================================================
# Turnpike report
# ============================================================================

@dataclass
class TurnpikeOptions:
    delta: Optional[float] = None
    window: Optional[float] = None  # fit window width, default min(T/4, 2)
    floor_factor: float = 2.0
    kappa: float = 10.0
    tau: float = 1.0


@dataclass
class TurnpikeReport:
    curves: DistanceCurves
    y_inf: np.ndarray
    ybar_inf: float
    delta: float
    entry_time: float
    entry_fit: ExponentialFit
    exit_fit: ExponentialFit
    plateau: float
    plateau_dy: float
    dy0: float
    noise_floor: float
    envelope_ratio: float
    JT: float
    Js: float
    cost_gap: float
    y0_inf: float
    z_inf: float
    sanity: Dict[str, object] = field(default_factory=dict)

    @property
    def confirmed(self) -> bool:
        return self.entry_fit.mu > 0.0 and self.plateau_dy <= 0.1 * self.dy0

    @property
    def verdict(self) -> str:
        return "turnpike confirmed" if self.confirmed else "not confirmed"

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "delta": self.delta,
            "entry_time": self.entry_time,
            "entry_fit": self.entry_fit.as_dict(),
            "exit_fit": self.exit_fit.as_dict(),
            "plateau": self.plateau,
            "plateau_dy": self.plateau_dy,
            "dy0": self.dy0,
            "noise_floor": self.noise_floor,
            "envelope_ratio": self.envelope_ratio,
            "JT": self.JT,
            "Js": self.Js,
            "cost_gap": self.cost_gap,
            "y0_inf": self.y0_inf,
            "z_inf": self.z_inf,
            "ybar_inf": self.ybar_inf,
            "sanity": self.sanity,
        }


def analyze_turnpike(spec: ProblemSpec, disc: Discretization, result: OptimizationResult,
                     pair: SteadyPair, opts: Optional[TurnpikeOptions] = None) -> TurnpikeReport:
    opts = opts or TurnpikeOptions()
    sch = scheme_for(spec, disc)
    curves = distance_curves(result, pair)
    t, dy = curves.times, curves.dy
    T = float(t[-1])

    delta = opts.delta if opts.delta else default_delta(pair, sch.y0)
    t_s = entry_time(result, delta)

    middle = (t >= 0.25 * T) & (t <= 0.75 * T)
    if len(t) < MIN_FIT_SAMPLES or not np.any(middle):
        raise AnalysisError(f"{len(t)} snapshots are too few for the turnpike fits "
                            f"(need {MIN_FIT_SAMPLES} and one in [T/4, 3T/4]); use nt >= 4",
                            snapshots=len(t), suggested_nt=4)
    plateau = float(np.max(dy[middle] + curves.du[middle]))
    plateau_dy = float(np.max(dy[middle]))
    floor = opts.floor_factor * float(np.median(dy[middle]))

    width = opts.window if opts.window else min(0.25 * T, 2.0)
    steps = int(round(width / sch.dt))
    i_s = int(round(t_s / sch.dt))
    a, b = _fit_window(dy, i_s, i_s + steps + 1, floor)
    entry = fit_exponential_rates(t[a:b] - t[i_s], dy[a:b])
    entry.window = (float(t[a]), float(t[b - 1]))

    s_rev, d_rev = T - t[::-1], dy[::-1]
    a, b = _fit_window(d_rev, 0, steps + 1, floor)
    exit_ = fit_exponential_rates(s_rev[a:b], d_rev[a:b])
    exit_.window = (float(T - s_rev[b - 1]), float(T - s_rev[a]))

    after = t >= t_s
    with np.errstate(over="ignore"):
        envelope = (entry.K * np.exp(-entry.mu * (t[after] - t_s))
                    + exit_.K * np.exp(-exit_.mu * (T - t[after])) + plateau_dy)
    ratio = float(np.max(dy[after] / np.maximum(envelope, LOG_FLOOR))) if np.any(after) else math.nan

    report = TurnpikeReport(
        curves=curves,
        y_inf=result.trajectory.sup_norms(),
        ybar_inf=float(np.max(np.abs(pair.state))),
        delta=float(delta),
        entry_time=t_s,
        entry_fit=entry,
        exit_fit=exit_,
        plateau=plateau,
        plateau_dy=plateau_dy,
        dy0=float(dy[0]),
        noise_floor=floor,
        envelope_ratio=ratio,
        JT=result.cost.total,
        Js=pair.cost,
        cost_gap=result.cost.total - T * pair.cost,
        y0_inf=float(np.max(np.abs(sch.y0))),
        z_inf=float(np.max(np.abs(sch.z * sch.mask_observation))),
        sanity=sanity_bounds(spec, disc, result, pair),
    )
    console.info(f"t_s = {t_s:.4g} (delta {delta:.4g}), mu_entry = {entry.mu:.4g}, "
                 f"mu_exit = {exit_.mu:.4g}, plateau = {plateau_dy:.3e} -> {report.verdict}")
    if entry.clipped or exit_.clipped:
        console.warn("distance series touched the log floor inside a fit window")
    return report


# ============================================================================
# Averages sweep
# ============================================================================

SWEEP_COLUMNS = ("T", "JT", "JT_over_T", "Js", "gap", "yt_l2", "ratio")


@dataclass
class SweepRow:
    T: float
    JT: float = math.nan
    JT_over_T: float = math.nan
    Js: float = math.nan
    gap: float = math.nan
    yt_l2: float = math.nan
    ratio: float = math.nan
    iterations: int = 0
    grad_norm: float = math.nan
    ok: bool = True
    error: str = ""

    def values(self) -> List[float]:
        return [getattr(self, c) for c in SWEEP_COLUMNS]

    def as_dict(self) -> dict:
        out = {c: getattr(self, c) for c in SWEEP_COLUMNS}
        out.update(iterations=self.iterations, grad_norm=self.grad_norm, ok=self.ok, error=self.error)
        return out


@dataclass
class SweepTable:
    rows: List[SweepRow]
    Js: float
    averages_label: str
    nx: int
    dt: float

    def as_dict(self) -> dict:
        return {
            "averages_label": self.averages_label,
            "Js": self.Js,
            "nx": self.nx,
            "dt": self.dt,
            "rows": [r.as_dict() for r in self.rows],
        }


def _init_worker(level: int) -> None:
    # spawned workers start with the default verbosity
    console.set_verbosity(level)


def _sweep_row(spec: ProblemSpec, horizon: float, nx: int, dt: float,
               opts: OptimizerOptions, js: float) -> SweepRow:
    row = SweepRow(T=float(horizon))
    try:
        spec_T = spec.with_horizon(horizon)
        disc = Discretization.from_dt(spec_T, nx, dt)
        sch = scheme_for(spec_T, disc)
        res = gradient_descent(spec_T, disc, None, opts)
        scale = float(np.max(np.abs(sch.y0))) + float(np.max(np.abs(sch.z * sch.mask_observation)))
        bound = float(np.max(np.abs(res.control))) + float(np.max(np.abs(res.trajectory.values)))
        row.JT = res.cost.total
        row.JT_over_T = res.cost.total / horizon
        row.Js = js
        row.gap = res.cost.total - horizon * js
        row.yt_l2 = time_derivative_l2(res.trajectory)
        row.ratio = bound / scale if scale > 0.0 else 0.0
        row.iterations = res.iterations
        row.grad_norm = res.grad_norm
    except (TurnpikeLabError, ValueError) as e:
        row.ok = False
        row.error = str(e)
    return row


def averages_sweep(spec: ProblemSpec, nx: int, dt: float, horizons: Sequence[float],
                   opts: Optional[OptimizerOptions] = None, pair: Optional[SteadyPair] = None,
                   steady_opts: Optional[SteadyOptions] = None, jobs: int = 1) -> SweepTable:
    """One optimisation per horizon at fixed h and dt (nt grows with T)."""
    opts = opts or OptimizerOptions()
    horizons = sorted(float(T) for T in horizons)
    if pair is None:
        disc0 = Discretization.from_dt(spec.with_horizon(horizons[0]), nx, dt)
        pair = solve_steady_optimum(spec, scheme_for(spec.with_horizon(horizons[0]), disc0).grid, steady_opts)

    label = "convergence of averages" if spec.controls_everywhere else "upper-bound check only"
    console.info(f"Sweep over T = {horizons} ({label}), jobs = {jobs}")

    if jobs > 1:
        workers = min(jobs, len(horizons), os.cpu_count() or 1)
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(console.verbosity(),)) as pool:
            futures = [pool.submit(_sweep_row, spec, T, nx, dt, opts, pair.cost) for T in horizons]
            rows = [fut.result() for fut in futures]
    else:
        rows = [_sweep_row(spec, T, nx, dt, opts, pair.cost) for T in horizons]

    rows.sort(key=lambda r: r.T)
    for r in rows:
        if r.ok:
            console.info(f"T = {r.T:g}: JT/T = {r.JT_over_T:.6g}, Js = {r.Js:.6g}, gap = {r.gap:.4g}")
        else:
            console.warn(f"T = {r.T:g} failed: {r.error}")
    return SweepTable(rows=rows, Js=pair.cost, averages_label=label, nx=nx, dt=dt)


# ============================================================================
# Representation formula
# ============================================================================

@dataclass
class RepresentationTerms:
    steady_term: float
    yt_term: float
    boundary_term: float
    reconstructed: float
    direct: float
    abs_mismatch: float
    relative_mismatch: float

    def as_dict(self) -> Dict[str, float]:
        return dict(self.__dict__)


def representation_decomposition(spec: ProblemSpec, disc: Discretization, u) -> RepresentationTerms:
    """J_T = int J_s(-Delta y + f(y)) dt + 1/2 int int |y_t|^2 + 1/2 [E(y(T)) - E(y0)],
    E(v) = ||v||_H10^2 + 2 int F(v), valid when the control acts on the whole domain.

    The steady control at step k is the scheme-consistent A[k] = -Delta_h Y[k+1] + f(Y[k])
    paired with the state Y[k+1].
    """
    if not spec.controls_everywhere:
        raise ValueError(f"representation formula needs omega = domain (got omega = {spec.control})")
    sch = scheme_for(spec, disc)
    grid, dt = sch.grid, sch.dt
    direct: CostBreakdown = evaluate_cost(spec, disc, u)
    Y = direct.trajectory.values
    f = spec.nonlinearity
    w = dt * grid.h

    A = -laplacian_apply(grid, Y[1:]) + f.f(Y[:-1])
    e = Y[1:] - sch.z
    steady = 0.5 * w * float(np.sum(A * A)) + 0.5 * spec.beta * w * float(np.sum(sch.mask_observation * e * e))
    D = np.diff(Y, axis=0) / dt
    yt = 0.5 * w * float(np.sum(D * D))

    def energy(v):
        return norm(grid, v, "H10") ** 2 + 2.0 * grid.h * float(np.sum(f.primitive(v)))

    boundary = 0.5 * (energy(Y[-1]) - energy(Y[0]))
    total = steady + yt + boundary
    mismatch = abs(total - direct.total)
    return RepresentationTerms(
        steady_term=steady,
        yt_term=yt,
        boundary_term=boundary,
        reconstructed=total,
        direct=direct.total,
        abs_mismatch=mismatch,
        relative_mismatch=mismatch / max(abs(direct.total), 1.0),
    )


# ============================================================================
# Quasi-optimal strategy
# ============================================================================

@dataclass
class QuasiOptimal:
    control: np.ndarray
    trajectory: Trajectory
    cost: CostBreakdown
    tau: float
    kappa: float
    optimal_cost: float = math.nan

    @property
    def excess(self) -> float:
        return self.cost.total - self.optimal_cost

    def as_dict(self) -> dict:
        return {"tau": self.tau, "kappa": self.kappa, "JT_quasi": self.cost.total,
                "JT_optimal": self.optimal_cost, "excess": self.excess}


def quasi_optimal_strategy(spec: ProblemSpec, disc: Discretization, pair: SteadyPair, tau: float,
                           kappa: float = 10.0, optimum: Optional[OptimizationResult] = None) -> QuasiOptimal:
    """u = ubar - kappa (y - ybar) on w for t < tau, then u = ubar.

    No exit phase: J_T has no terminal constraint to steer towards.
    """
    sch = scheme_for(spec, disc)
    if not 0.0 < tau < spec.horizon:
        raise ValueError(f"switch time tau must lie in (0, T={spec.horizon}) (got {tau})")
    held = check_control(sch, constant_control(pair, disc))
    ybar = pair.state
    mask = sch.mask_control
    f = spec.nonlinearity.f
    solve = sch.solver.solve
    inv_dt = 1.0 / sch.dt

    u = held.copy()
    values = np.empty((sch.nt + 1, sch.grid.nx))
    values[0] = y = sch.y0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(sch.nt):
            if k * sch.dt < tau:
                u[k] = held[k] - kappa * mask * (y - ybar)
            y = solve(y * inv_dt - f(y) + u[k])
            if not np.all(np.isfinite(y)):
                raise BlowUpError(step=k + 1, suggested_dt=suggest_dt(spec),
                                  message=f"quasi-optimal phase blew up at step {k + 1}; "
                                          f"try a larger kappa (now {kappa:g}) or a smaller dt")
            values[k + 1] = y

    traj = Trajectory(sch.grid, sch.times, values, label="quasi-optimal")
    cost = trajectory_cost(sch, u, values)
    cost.trajectory = traj
    out = QuasiOptimal(control=u, trajectory=traj, cost=cost, tau=float(tau), kappa=float(kappa))
    if optimum is not None:
        out.optimal_cost = optimum.cost.total
        console.info(f"Quasi-optimal JT = {cost.total:.8g}, optimum {optimum.cost.total:.8g}, "
                     f"excess {out.excess:.4g}")
    return out
