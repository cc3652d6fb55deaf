"""
parabolic.py

Semi-implicit time stepping for the controlled semilinear heat equation

    (Y[k+1] - Y[k]) / dt - Delta_h Y[k+1] + f(Y[k]) = U[k] chi_w,   Y[0] = y0

(implicit diffusion, explicit nonlinearity), its exact discrete adjoint, and
the discrete energy identity.

Quadrature convention used everywhere (rectangle rule):
- control U[k] acts on [t_k, t_k+1), k = 0..nt-1
- tracking uses the post-step states Y[1..nt]
- adjoint q has nt+1 snapshots with q[nt] = 0; the gradient pairs U[k] with q[k]
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Dict, Optional

import numpy as np

from errors import BlowUpError
from grid import Grid, ShiftedLaplacianSolver, laplacian_apply, norm
from problem import Discretization, Nonlinearity, ProblemSpec


# ============================================================================
# Discrete problem data
# ============================================================================

@dataclass(frozen=True, eq=False)
class Scheme:
    """Sampled data and the factored implicit operator for one (spec, disc)."""
    spec: ProblemSpec
    disc: Discretization
    grid: Grid
    dt: float
    mask_control: np.ndarray
    mask_observation: np.ndarray
    y0: np.ndarray
    z: np.ndarray

    @property
    def nt(self) -> int:
        return self.disc.nt

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.disc.nt + 1)

    @cached_property
    def solver(self) -> ShiftedLaplacianSolver:
        return ShiftedLaplacianSolver(self.grid, 1.0 / self.dt)


@lru_cache(maxsize=32)
def scheme_for(spec: ProblemSpec, disc: Discretization) -> Scheme:
    grid = Grid.for_problem(spec, disc)
    y0 = spec.initial.sample(grid.x)
    z = spec.target.sample(grid.x)
    for arr in (y0, z):
        arr.setflags(write=False)
    mask_w = grid.mask(spec.control)
    mask_w0 = grid.mask(spec.observation)
    mask_w.setflags(write=False)
    mask_w0.setflags(write=False)
    return Scheme(spec=spec, disc=disc, grid=grid, dt=disc.dt(spec),
                  mask_control=mask_w, mask_observation=mask_w0, y0=y0, z=z)


# ============================================================================
# Trajectories and controls
# ============================================================================

@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: Grid
    times: np.ndarray
    values: np.ndarray
    label: str = ""
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def nt(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def sup_norms(self) -> np.ndarray:
        return norm(self.grid, self.values, "Linf")


def zero_control(spec: ProblemSpec, disc: Discretization) -> np.ndarray:
    return np.zeros((disc.nt, disc.nx))


def check_control(scheme: Scheme, u) -> np.ndarray:
    """Validate a (nt, nx) control supported on the control mask."""
    u = np.asarray(u, dtype=float)
    expected = (scheme.nt, scheme.grid.nx)
    if u.shape != expected:
        raise ValueError(f"control has shape {u.shape}, expected {expected}")
    if not np.all(np.isfinite(u)):
        raise ValueError("control has non-finite entries")
    if np.any(u[:, scheme.mask_control == 0.0] != 0.0):
        raise ValueError("control has support outside the control subdomain omega")
    return u


def suggest_dt(spec: ProblemSpec) -> Optional[float]:
    """Explicit-nonlinearity step bound 1 / (2 max|f'|) on the data range."""
    x = np.linspace(spec.domain[0], spec.domain[1], 257)
    radius = 1.0
    for profile in (spec.initial, spec.target):
        try:
            radius = max(radius, float(np.max(np.abs(profile.sample(x)))))
        except Exception:
            pass
    slope = float(np.max(spec.nonlinearity.df(np.linspace(-radius, radius, 201))))
    if slope <= 0.0 or not math.isfinite(slope):
        return None
    return 1.0 / (2.0 * slope)


# ============================================================================
# Forward and adjoint sweeps
# ============================================================================

def step_semi_implicit(grid: Grid, y_i, u_i, dt: float, f: Nonlinearity,
                       mask=None, solver: Optional[ShiftedLaplacianSolver] = None) -> np.ndarray:
    """One step: (1/dt - Delta_h) Y[i+1] = Y[i]/dt - f(Y[i]) + U[i] chi_w."""
    if not dt > 0.0:
        raise ValueError(f"dt must be > 0 (got {dt})")
    y_i = np.asarray(y_i, dtype=float)
    u_i = np.asarray(u_i, dtype=float)
    if not (np.all(np.isfinite(y_i)) and np.all(np.isfinite(u_i))):
        raise ValueError("non-finite input to semi-implicit step")
    if mask is not None:
        u_i = u_i * mask
    if solver is None:
        solver = ShiftedLaplacianSolver(grid, 1.0 / dt)
    return solver.solve(y_i / dt - f.f(y_i) + u_i)


def solve_forward(spec: ProblemSpec, disc: Discretization, u, label: str = "state") -> Trajectory:
    sch = scheme_for(spec, disc)
    u = check_control(sch, u)
    nt, nx = disc.nt, disc.nx
    inv_dt = 1.0 / sch.dt
    solve = sch.solver.solve
    f = spec.nonlinearity.f

    values = np.empty((nt + 1, nx))
    values[0] = sch.y0
    y = sch.y0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(nt):
            y = solve(y * inv_dt - f(y) + u[k])
            if not np.all(np.isfinite(y)):
                raise BlowUpError(step=k + 1, suggested_dt=suggest_dt(spec),
                                  message=f"forward solve blew up at step {k + 1} (t = {(k + 1) * sch.dt:.4g})")
            values[k + 1] = y
    return Trajectory(sch.grid, sch.times, values, label=label)


def solve_adjoint(spec: ProblemSpec, disc: Discretization, y: Trajectory) -> Trajectory:
    """Backward sweep from q(T) = 0; exact transpose of the linearised forward scheme.

    q[k] = (1/dt - Delta_h)^-1 [ q[k+1]/dt - f'(Y[k+1]) q[k+1] + beta chi_w0 (Y[k+1] - z) ]
    """
    sch = scheme_for(spec, disc)
    nt, nx = disc.nt, disc.nx
    if y.values.shape != (nt + 1, nx):
        raise ValueError(f"state trajectory has shape {y.values.shape}, expected {(nt + 1, nx)}")
    inv_dt = 1.0 / sch.dt
    solve = sch.solver.solve

    post = y.values[1:]
    slope = spec.nonlinearity.df(post)
    source = spec.beta * sch.mask_observation * (post - sch.z)

    q = np.zeros((nt + 1, nx))
    qk = np.zeros(nx)
    if spec.beta == 0.0:
        return Trajectory(sch.grid, sch.times, q, label="adjoint")
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(nt - 1, -1, -1):
            qk = solve(qk * inv_dt - slope[k] * qk + source[k])
            if not np.all(np.isfinite(qk)):
                raise BlowUpError(step=k, message=f"adjoint solve blew up at step {k}")
            q[k] = qk
    return Trajectory(sch.grid, sch.times, q, label="adjoint")


# ============================================================================
# Energy identity and a priori estimates
# ============================================================================

def time_derivative_l2(traj: Trajectory) -> float:
    """sqrt(dt * sum_k ||(Y[k+1] - Y[k]) / dt||^2), the discrete ||y_t||_L2((0,T)x(a,b))."""
    dt = traj.dt
    d = np.diff(traj.values, axis=0) / dt
    return math.sqrt(dt * traj.grid.h * float(np.sum(d * d)))


def energy_terms(spec: ProblemSpec, disc: Discretization, y: Trajectory, h_src) -> Dict[str, float]:
    """Both sides of

        int int |h|^2 = int int |y_t|^2 + |-Delta y + f(y)|^2
                        + ||y(T)||_H10^2 + 2 int F(y(T)) - ||y0||_H10^2 - 2 int F(y0)

    discretised with D[k] = (Y[k+1]-Y[k])/dt and A[k] = -Delta_h Y[k+1] + f(Y[k]),
    so that the scheme reads D[k] + A[k] = H[k].
    """
    sch = scheme_for(spec, disc)
    grid, dt = sch.grid, sch.dt
    Y = y.values
    H = np.asarray(h_src, dtype=float)
    if H.shape != (disc.nt, disc.nx) or Y.shape != (disc.nt + 1, disc.nx):
        raise ValueError(f"shape mismatch: source {H.shape}, state {Y.shape}, disc ({disc.nt}, {disc.nx})")
    f = spec.nonlinearity
    D = np.diff(Y, axis=0) / dt
    A = -laplacian_apply(grid, Y[1:]) + f.f(Y[:-1])
    w = dt * grid.h

    def energy(v):
        return norm(grid, v, "H10") ** 2 + 2.0 * grid.h * float(np.sum(f.primitive(v)))

    terms = {
        "source": w * float(np.sum(H * H)),
        "time_derivative": w * float(np.sum(D * D)),
        "elliptic": w * float(np.sum(A * A)),
        "boundary": energy(Y[-1]) - energy(Y[0]),
    }
    terms["rhs"] = terms["time_derivative"] + terms["elliptic"] + terms["boundary"]
    return terms


def energy_identity_residual(spec: ProblemSpec, disc: Discretization, y: Trajectory, h_src) -> float:
    """|LHS - RHS| / max(LHS, 1) for the energy identity (source acting on all of the domain)."""
    t = energy_terms(spec, disc, y, h_src)
    return abs(t["source"] - t["rhs"]) / max(t["source"], 1.0)


def energy_estimates(spec: ProblemSpec, disc: Discretization, y: Trajectory, h_src) -> Dict[str, float]:
    """Both sides of the two a priori bounds

        ||y||_L2(H10)  <= ||y0||_L2 + ||h||_L2L2
        ||f(y)||_L2L2  <= sqrt(2 int F(y0)) + ||h||_L2L2
    """
    sch = scheme_for(spec, disc)
    grid, dt = sch.grid, sch.dt
    Y = y.values
    H = np.asarray(h_src, dtype=float)
    f = spec.nonlinearity
    h_norm = math.sqrt(dt * grid.h * float(np.sum(H * H)))
    grad_norm = math.sqrt(dt * float(np.sum(norm(grid, Y[1:], "H10") ** 2)))
    fy = f.f(Y[1:])
    f_norm = math.sqrt(dt * grid.h * float(np.sum(fy * fy)))
    return {
        "gradient_lhs": grad_norm,
        "gradient_rhs": norm(grid, Y[0], "L2") + h_norm,
        "nonlinearity_lhs": f_norm,
        "nonlinearity_rhs": math.sqrt(2.0 * grid.h * float(np.sum(f.primitive(Y[0])))) + h_norm,
    }
