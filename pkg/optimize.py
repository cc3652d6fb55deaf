"""
optimize.py

Time-evolution cost J_T, its exact discrete gradient and constant-stepsize
gradient descent.

    J_T(U) = 1/2 dt h sum_{k<nt} sum_w U[k]^2 + beta/2 dt h sum_{k>=1} sum_w0 (Y[k] - z)^2
    grad   = chi_w (U[k] + q[k])      (L2 inner product dt * h * sum)

Stepsize modes:
- auto      s = 1 / (1 + beta / lambda_h^2)   inverse Lipschitz bound of the reduced gradient
- horizon   s = 1 / (1 + beta T)
- fixed     user value

A run that diverges (cost up by more than round-off 3 iterations in a row) or
blows up is restarted from its best iterate with half the stepsize, up to
`restarts` times.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

import console
from errors import BlowUpError, DivergenceError
from grid import laplacian_apply, principal_eigenvalue
from parabolic import Scheme, Trajectory, check_control, scheme_for, solve_adjoint, solve_forward
from problem import Discretization, ProblemSpec

STEPSIZE_MODES = ("auto", "horizon", "fixed")
DIVERGENCE_STREAK = 3
ROUNDOFF_RTOL = 1e-12


# ============================================================================
# Cost and gradient
# ============================================================================

@dataclass
class CostBreakdown:
    total: float
    control_term: float
    tracking_term: float
    trajectory: Optional[Trajectory] = None

    def as_dict(self) -> Dict[str, float]:
        return {"JT": self.total, "control_term": self.control_term, "tracking_term": self.tracking_term}


def trajectory_cost(sch: Scheme, u: np.ndarray, y: np.ndarray) -> CostBreakdown:
    w = sch.dt * sch.grid.h
    control = 0.5 * w * float(np.sum(u * u))
    e = y[1:] - sch.z
    tracking = 0.5 * sch.spec.beta * w * float(np.sum(sch.mask_observation * e * e))
    return CostBreakdown(control + tracking, control, tracking)


def evaluate_cost(spec: ProblemSpec, disc: Discretization, u) -> CostBreakdown:
    sch = scheme_for(spec, disc)
    u = check_control(sch, u)
    traj = solve_forward(spec, disc, u)
    out = trajectory_cost(sch, u, traj.values)
    out.trajectory = traj
    return out


def grad_norm(sch: Scheme, g) -> float:
    """sqrt(dt h sum g^2), the L2((0,T) x w) norm of a control-shaped array."""
    return math.sqrt(sch.dt * sch.grid.h * float(np.sum(np.square(g))))


def _gradient(sch: Scheme, u: np.ndarray, q: Trajectory) -> np.ndarray:
    return sch.mask_control * (u + q.values[:-1])


def gradient(spec: ProblemSpec, disc: Discretization, u, y: Optional[Trajectory] = None) -> np.ndarray:
    """chi_w (U + q) with q from the exact discrete adjoint; zero off w."""
    sch = scheme_for(spec, disc)
    u = check_control(sch, u)
    if y is None:
        y = solve_forward(spec, disc, u)
    return _gradient(sch, u, solve_adjoint(spec, disc, y))


def constant_control(pair, disc: Discretization) -> np.ndarray:
    """Hold a steady control over every time step."""
    u_bar = np.asarray(pair.control, dtype=float)
    if u_bar.shape != (disc.nx,):
        raise ValueError(f"steady control has {u_bar.shape[-1]} nodes, disc has nx={disc.nx}")
    return np.tile(u_bar, (disc.nt, 1))


# ============================================================================
# Gradient descent
# ============================================================================

@dataclass
class OptimizerOptions:
    stepsize_mode: str = "auto"
    stepsize: float = 0.0  # used by the "fixed" mode
    max_iters: int = 2000
    grad_tol: float = 1e-6
    restarts: int = 5
    log_every: int = 50


@dataclass
class OptimizationResult:
    control: np.ndarray
    trajectory: Trajectory
    adjoint: Trajectory
    cost: CostBreakdown
    cost_history: List[float] = field(default_factory=list)
    grad_norm_history: List[float] = field(default_factory=list)
    termination: str = ""
    stepsize: float = math.nan
    stepsize_mode: str = "auto"
    restarts: int = 0

    @property
    def iterations(self) -> int:
        return len(self.cost_history) - 1

    @property
    def grad_norm(self) -> float:
        return self.grad_norm_history[-1]

    def as_dict(self) -> dict:
        return {
            "JT": self.cost.total,
            "control_term": self.cost.control_term,
            "tracking_term": self.cost.tracking_term,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "termination": self.termination,
            "stepsize": self.stepsize,
            "stepsize_mode": self.stepsize_mode,
            "restarts": self.restarts,
            "label": "stationary point",
        }


class _Diverged(Exception):
    """Carries the best iterate so far and the history up to it."""

    def __init__(self, iteration: int, reason: str, best: np.ndarray,
                 costs: List[float], gnorms: List[float]):
        super().__init__(reason)
        self.iteration = iteration
        self.reason = reason
        self.best = best
        self.costs = costs
        self.gnorms = gnorms


def cost_increased(new: float, old: float) -> bool:
    """True when new exceeds old by more than round-off."""
    return new > old + ROUNDOFF_RTOL * max(1.0, abs(old))


def resolve_stepsize(spec: ProblemSpec, disc: Discretization, opts: OptimizerOptions) -> float:
    mode = opts.stepsize_mode
    if mode == "auto":
        lam = principal_eigenvalue(scheme_for(spec, disc).grid)
        return 1.0 / (1.0 + spec.beta / lam ** 2)
    if mode == "horizon":
        return 1.0 / (1.0 + spec.beta * spec.horizon)
    if mode == "fixed":
        if not opts.stepsize > 0.0:
            raise ValueError(f"fixed stepsize must be > 0 (got {opts.stepsize})")
        return float(opts.stepsize)
    raise ValueError(f"unknown stepsize mode '{mode}' (expected one of {', '.join(STEPSIZE_MODES)})")


def _descend(spec: ProblemSpec, disc: Discretization, u0: np.ndarray, s: float,
             opts: OptimizerOptions, costs: Optional[List[float]] = None,
             gnorms: Optional[List[float]] = None) -> OptimizationResult:
    """One descent run from u0; costs/gnorms carry the history of earlier runs."""
    sch = scheme_for(spec, disc)
    u = u0.copy()
    y = solve_forward(spec, disc, u)
    cost = trajectory_cost(sch, u, y.values)
    q = solve_adjoint(spec, disc, y)
    g = _gradient(sch, u, q)
    gn = grad_norm(sch, g)
    costs = list(costs or [])[:-1] + [cost.total]
    gnorms = list(gnorms or [])[:-1] + [gn]
    best_u, best_len = u, len(costs)
    streak = 0
    it = len(costs) - 1

    def diverged(reason: str) -> _Diverged:
        return _Diverged(it, reason, best_u, costs[:best_len], gnorms[:best_len])

    while gn > opts.grad_tol and it < opts.max_iters:
        it += 1
        u = u - s * g
        try:
            y = solve_forward(spec, disc, u)
        except BlowUpError as e:
            raise diverged(str(e)) from e
        new = trajectory_cost(sch, u, y.values)
        streak = streak + 1 if cost_increased(new.total, cost.total) else 0
        if streak >= DIVERGENCE_STREAK:
            raise diverged(f"cost increased for {DIVERGENCE_STREAK} consecutive iterations")
        cost = new
        q = solve_adjoint(spec, disc, y)
        g = _gradient(sch, u, q)
        gn = grad_norm(sch, g)
        costs.append(cost.total)
        gnorms.append(gn)
        if cost.total <= costs[best_len - 1]:
            best_u, best_len = u, len(costs)
        if opts.log_every and it % opts.log_every == 0:
            console.detail(f"it={it:5d} JT={cost.total:.10g} |grad|={gn:.3e}")

    cost.trajectory = y
    return OptimizationResult(
        control=u, trajectory=y, adjoint=q, cost=cost,
        cost_history=costs, grad_norm_history=gnorms,
        termination="grad_tol" if gn <= opts.grad_tol else "max_iters",
        stepsize=s, stepsize_mode=opts.stepsize_mode,
    )


def gradient_descent(spec: ProblemSpec, disc: Discretization, u0=None,
                     opts: Optional[OptimizerOptions] = None) -> OptimizationResult:
    """u <- u - s grad(u) until |grad| <= grad_tol or max_iters."""
    opts = opts or OptimizerOptions()
    sch = scheme_for(spec, disc)
    u0 = np.zeros((disc.nt, disc.nx)) if u0 is None else check_control(sch, u0)
    s = resolve_stepsize(spec, disc, opts)
    console.info(f"Gradient descent: stepsize {s:.4e} ({opts.stepsize_mode}), "
                 f"grad_tol {opts.grad_tol:.1e}, max_iters {opts.max_iters}")

    restarts = 0
    costs: List[float] = []
    gnorms: List[float] = []
    while True:
        try:
            result = _descend(spec, disc, u0, s, opts, costs, gnorms)
            break
        except _Diverged as e:
            if restarts >= opts.restarts:
                raise DivergenceError(s, e.iteration,
                                      f"{e.reason} at stepsize {s:.3e} after {restarts} restarts; "
                                      f"try a stepsize below {s / 2:.3e}") from e
            restarts += 1
            console.warn(f"{e.reason} (iteration {e.iteration}); restarting from iteration "
                         f"{len(e.costs) - 1} with stepsize {s / 2:.4e}")
            u0, costs, gnorms = e.best, e.costs, e.gnorms
            s *= 0.5

    result.restarts = restarts
    msg = (f"Stopped on {result.termination} after {result.iterations} iterations: "
           f"JT = {result.cost.total:.10g}, |grad| = {result.grad_norm:.3e}")
    if result.termination == "grad_tol":
        console.info(msg)
    else:
        console.warn(msg)
    return result


# ============================================================================
# Checks on a computed optimum
# ============================================================================

def optimality_system_residual(spec: ProblemSpec, disc: Discretization, result: OptimizationResult) -> float:
    """Largest L2((0,T) x domain) residual of the discrete optimality system with u = -q chi_w.

    The state and adjoint recursions are re-evaluated from the stored
    trajectories, so only round-off separates those two terms from zero.
    """
    sch = scheme_for(spec, disc)
    f = spec.nonlinearity
    Y, Q, U = result.trajectory.values, result.adjoint.values, result.control
    inv_dt = 1.0 / sch.dt
    state_res = (Y[1:] - Y[:-1]) * inv_dt - laplacian_apply(sch.grid, Y[1:]) + f.f(Y[:-1]) - U
    adjoint_res = ((Q[:-1] - Q[1:]) * inv_dt - laplacian_apply(sch.grid, Q[:-1])
                   + f.df(Y[1:]) * Q[1:] - spec.beta * sch.mask_observation * (Y[1:] - sch.z))
    return max(grad_norm(sch, state_res), grad_norm(sch, adjoint_res),
               grad_norm(sch, sch.mask_control * (U + Q[:-1])))


def sanity_bounds(spec: ProblemSpec, disc: Discretization, result: OptimizationResult, pair=None) -> dict:
    """J_T at the optimum against J_T(0) and, given a steady pair, J_T(u_bar held)."""
    sch = scheme_for(spec, disc)
    jt = result.cost.total
    slack = 1e-9 * max(1.0, abs(jt))
    j_zero = evaluate_cost(spec, disc, np.zeros((sch.nt, sch.grid.nx))).total
    out = {"JT_zero_control": j_zero, "below_zero_control": jt <= j_zero + slack}
    if pair is not None:
        j_held = evaluate_cost(spec, disc, constant_control(pair, disc)).total
        out["JT_steady_held"] = j_held
        out["below_steady_held"] = jt <= j_held + slack
    return out
