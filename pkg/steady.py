"""
steady.py

Steady problem:

    minimise  J_s(u) = 1/2 int_w |u|^2 + beta/2 int_w0 |y - z|^2
    subject   -Delta y + f(y) = u chi_w,  y = 0 on the boundary

- newton_elliptic / solve_elliptic: damped Newton for the state equation
- steady_cost:                      J_s with its two terms
- solve_steady_optimum:             gradient descent with Armijo backtracking
- steady_optimality_residual:       residual of the steady optimality system

The optimum reported is the one reached from u = 0. Steady optima need not be
unique for large targets; no global search is attempted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

import console
from errors import NewtonError
from grid import Grid, ShiftedLaplacianSolver, laplacian_apply, norm
from problem import ProblemSpec

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50
ARMIJO_C = 1e-4
MAX_TRIAL_STEP = 1e6


# ============================================================================
# State equation
# ============================================================================

@dataclass
class NewtonResult:
    y: np.ndarray
    residuals: List[float]
    iterations: int
    converged: bool


def elliptic_residual(spec: ProblemSpec, grid: Grid, y, u_s) -> np.ndarray:
    """G(y) = -Delta_h y + f(y) - u_s chi_w."""
    return -laplacian_apply(grid, y) + spec.nonlinearity.f(y) - u_s * grid.mask(spec.control)


def newton_elliptic(spec: ProblemSpec, grid: Grid, u_s, y_init=None,
                    tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER) -> NewtonResult:
    """Newton on G(y) = 0; the full step is halved while it increases ||G||."""
    f = spec.nonlinearity
    u_s = np.asarray(u_s, dtype=float)
    if u_s.shape != (grid.nx,):
        raise ValueError(f"steady control has shape {u_s.shape}, expected ({grid.nx},)")
    y = np.zeros(grid.nx) if y_init is None else np.array(y_init, dtype=float)
    G = elliptic_residual(spec, grid, y, u_s)
    r = norm(grid, G, "L2")
    residuals = [r]

    for it in range(1, max_iter + 1):
        if r <= tol:
            return NewtonResult(y, residuals, it - 1, True)
        step = ShiftedLaplacianSolver(grid, f.df(y)).solve(-G)
        lam = 1.0
        accepted = False
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(40):
                y_new = y + lam * step
                G_new = elliptic_residual(spec, grid, y_new, u_s)
                r_new = norm(grid, G_new, "L2")
                if math.isfinite(r_new) and r_new < r:
                    accepted = True
                    break
                lam *= 0.5
        if not accepted:
            # stalled on the round-off floor
            if r <= 1e3 * tol:
                console.detail(f"Newton stalled at residual {r:.3e} (tol {tol:.1e}); accepting")
                return NewtonResult(y, residuals, it - 1, True)
            raise NewtonError(r, it)
        if r < 1e-3:
            console.detail(f"Newton it={it} r={r_new:.3e} ratio r_new/r^2={r_new / r ** 2:.3e}")
        y, G, r = y_new, G_new, r_new
        residuals.append(r)

    if r <= tol:
        return NewtonResult(y, residuals, max_iter, True)
    raise NewtonError(r, max_iter)


def solve_elliptic(spec: ProblemSpec, grid: Grid, u_s, y_init=None) -> np.ndarray:
    return newton_elliptic(spec, grid, u_s, y_init=y_init).y


# ============================================================================
# Cost and adjoint
# ============================================================================

@dataclass
class SteadyCost:
    total: float
    control_term: float
    tracking_term: float
    state: np.ndarray


def _cost_terms(spec: ProblemSpec, grid: Grid, u_s, y):
    mask_w = grid.mask(spec.control)
    mask_w0 = grid.mask(spec.observation)
    z = spec.target.sample(grid.x)
    control = 0.5 * grid.h * float(np.sum(mask_w * u_s * u_s))
    e = y - z
    tracking = 0.5 * spec.beta * grid.h * float(np.sum(mask_w0 * e * e))
    return control, tracking


def steady_cost(spec: ProblemSpec, grid: Grid, u_s, y_init=None) -> SteadyCost:
    y = solve_elliptic(spec, grid, u_s, y_init=y_init)
    control, tracking = _cost_terms(spec, grid, np.asarray(u_s, dtype=float), y)
    return SteadyCost(control + tracking, control, tracking, y)


def steady_adjoint(spec: ProblemSpec, grid: Grid, y) -> np.ndarray:
    """(-Delta_h + f'(y)) q = beta chi_w0 (y - z)."""
    src = spec.beta * grid.mask(spec.observation) * (y - spec.target.sample(grid.x))
    return ShiftedLaplacianSolver(grid, spec.nonlinearity.df(y)).solve(src)


# ============================================================================
# Steady optimum
# ============================================================================

@dataclass
class SteadyOptions:
    stepsize: float = 1.0  # first Armijo trial step
    max_iters: int = 5000
    grad_tol: float = 1e-7
    log_every: int = 200


@dataclass
class SteadyPair:
    grid: Grid
    control: np.ndarray
    state: np.ndarray
    adjoint: np.ndarray
    cost: float
    control_term: float
    tracking_term: float
    residual: float = math.nan
    grad_norm: float = math.nan
    iterations: int = 0
    converged: bool = False
    cost_history: List[float] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "Js": self.cost,
            "control_term": self.control_term,
            "tracking_term": self.tracking_term,
            "optimality_residual": self.residual,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "ubar_inf": float(np.max(np.abs(self.control))),
            "ybar_inf": float(np.max(np.abs(self.state))),
            "qbar_inf": float(np.max(np.abs(self.adjoint))),
        }


def solve_steady_optimum(spec: ProblemSpec, grid: Grid, opts: Optional[SteadyOptions] = None) -> SteadyPair:
    """Gradient descent on J_s from u = 0 with gradient chi_w (u + q)."""
    opts = opts or SteadyOptions()
    mask_w = grid.mask(spec.control)

    u = np.zeros(grid.nx)
    cost = steady_cost(spec, grid, u)
    q = steady_adjoint(spec, grid, cost.state)
    g = mask_w * (u + q)
    gn = norm(grid, g, "L2")
    s = opts.stepsize
    history = [cost.total]
    converged = gn <= opts.grad_tol
    it = 0

    while not converged and it < opts.max_iters:
        it += 1
        accepted = False
        while s > 1e-16:
            u_trial = u - s * g
            try:
                trial = steady_cost(spec, grid, u_trial, y_init=cost.state)
            except NewtonError:
                s *= 0.5
                continue
            if trial.total <= cost.total - ARMIJO_C * s * gn * gn:
                accepted = True
                break
            if abs(trial.total - cost.total) <= 1e-13 * max(1.0, abs(cost.total)):
                # decrease below round-off: accept only if the gradient shrinks
                q_trial = steady_adjoint(spec, grid, trial.state)
                if norm(grid, mask_w * (u_trial + q_trial), "L2") < gn:
                    accepted = True
                    break
            s *= 0.5
        if not accepted:
            console.warn(f"steady descent stalled at iteration {it} (|grad| = {gn:.3e})")
            break
        u, cost = u_trial, trial
        q = steady_adjoint(spec, grid, cost.state)
        g = mask_w * (u + q)
        gn = norm(grid, g, "L2")
        history.append(cost.total)
        converged = gn <= opts.grad_tol
        if opts.log_every and it % opts.log_every == 0:
            console.detail(f"steady it={it} Js={cost.total:.10g} |grad|={gn:.3e} s={s:.3e}")
        s = min(2.0 * s, MAX_TRIAL_STEP)

    if converged:
        console.info(f"Steady optimum: Js = {cost.total:.10g} after {it} iterations (|grad| = {gn:.3e})")
    else:
        console.warn(f"Steady descent not converged after {it} iterations (|grad| = {gn:.3e}); returning best iterate")

    pair = SteadyPair(grid=grid, control=u, state=cost.state, adjoint=q, cost=cost.total,
                      control_term=cost.control_term, tracking_term=cost.tracking_term,
                      grad_norm=gn, iterations=it, converged=converged, cost_history=history)
    pair.residual = steady_optimality_residual(spec, grid, pair)
    return pair


def steady_optimality_residual(spec: ProblemSpec, grid: Grid, pair: SteadyPair) -> float:
    """max of the L2 residuals of the state equation, the adjoint equation and u + q on w."""
    f = spec.nonlinearity
    y, q, u = pair.state, pair.adjoint, pair.control
    mask_w = grid.mask(spec.control)
    state_res = elliptic_residual(spec, grid, y, u)
    src = spec.beta * grid.mask(spec.observation) * (y - spec.target.sample(grid.x))
    adjoint_res = -laplacian_apply(grid, q) + f.df(y) * q - src
    return max(norm(grid, state_res, "L2"),
               norm(grid, adjoint_res, "L2"),
               norm(grid, mask_w * (u + q), "L2"))
