"""
grid.py

Uniform interior grid on (a, b) with homogeneous Dirichlet ghosts, the
second-difference Laplacian, subinterval masks, discrete norms and the
tridiagonal solve behind every implicit step.

Fields are plain float arrays whose last axis has length nx, so the same
helpers work on a single snapshot or on a whole (nt+1, nx) trajectory.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg.lapack import dpttrf, dpttrs

NORM_KINDS = ("L2", "Linf", "H10")


@dataclass(frozen=True)
class Grid:
    a: float
    b: float
    nx: int

    @classmethod
    def for_problem(cls, spec, disc) -> "Grid":
        return cls(float(spec.domain[0]), float(spec.domain[1]), int(disc.nx))

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.nx + 1)

    @property
    def length(self) -> float:
        return self.b - self.a

    @cached_property
    def x(self) -> np.ndarray:
        return self.a + self.h * np.arange(1, self.nx + 1)

    def mask(self, interval) -> np.ndarray:
        """0/1 weights of the nodes strictly inside the open interval."""
        lo, hi = interval
        return ((self.x > lo) & (self.x < hi)).astype(float)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.nx)


def _check_field(grid: Grid, v, name: str = "field") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim == 0 or v.shape[-1] != grid.nx:
        raise ValueError(f"{name} has shape {v.shape}, expected last axis of length nx={grid.nx}")
    return v


def laplacian_apply(grid: Grid, v) -> np.ndarray:
    """(v[i-1] - 2 v[i] + v[i+1]) / h^2 with zero ghost values."""
    v = _check_field(grid, v)
    out = -2.0 * v
    out[..., 1:] += v[..., :-1]
    out[..., :-1] += v[..., 1:]
    return out / grid.h ** 2


def principal_eigenvalue(grid: Grid) -> float:
    """Smallest eigenvalue of -Delta_h, (2 - 2 cos(pi h / L)) / h^2."""
    h = grid.h
    return (2.0 - 2.0 * math.cos(math.pi * h / grid.length)) / h ** 2


def inner(grid: Grid, u, v) -> float:
    u = _check_field(grid, u)
    v = _check_field(grid, v)
    return float(grid.h * np.sum(u * v))


def norm(grid: Grid, v, kind: str = "L2"):
    """Discrete L2, Linf or H1_0 norm along the last axis."""
    v = _check_field(grid, v)
    if kind == "L2":
        out = np.sqrt(grid.h * np.sum(v * v, axis=-1))
    elif kind == "Linf":
        out = np.max(np.abs(v), axis=-1)
    elif kind == "H10":
        pad = [(0, 0)] * (v.ndim - 1) + [(1, 1)]
        edges = np.diff(np.pad(v, pad), axis=-1)
        out = np.sqrt(np.sum(edges * edges, axis=-1) / grid.h)
    else:
        raise ValueError(f"unknown norm kind '{kind}' (expected one of {', '.join(NORM_KINDS)})")
    return float(out) if np.ndim(out) == 0 else out


class ShiftedLaplacianSolver:
    """Factor diag(shift) - Delta_h once, then solve many right-hand sides.

    The matrix is symmetric positive definite whenever shift >= 0, so the
    LAPACK LDL^T routines for s.p.d. tridiagonal systems apply.
    """

    def __init__(self, grid: Grid, shift):
        self.grid = grid
        inv_h2 = 1.0 / grid.h ** 2
        diag = np.broadcast_to(np.asarray(shift, dtype=float), (grid.nx,)) + 2.0 * inv_h2
        off = np.full(grid.nx - 1, -inv_h2)
        self._d, self._e, info = dpttrf(np.array(diag), off)
        if info != 0:
            raise ValueError(f"shifted Laplacian is not positive definite (dpttrf info={info})")

    def solve(self, rhs) -> np.ndarray:
        x, info = dpttrs(self._d, self._e, rhs)
        if info != 0:
            raise ValueError(f"tridiagonal solve failed (dpttrs info={info})")
        return x


def solve_shifted_laplacian(grid: Grid, sigma: float, rhs) -> np.ndarray:
    """Solve (sigma - Delta_h) v = rhs by direct tridiagonal elimination."""
    if not (math.isfinite(sigma) and sigma > 0.0):
        raise ValueError(f"sigma must be > 0 (got {sigma})")
    rhs = _check_field(grid, rhs, "rhs")
    if rhs.ndim != 1:
        raise ValueError(f"rhs must be a single field, got shape {rhs.shape}")
    return ShiftedLaplacianSolver(grid, sigma).solve(rhs)
