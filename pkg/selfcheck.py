#!/usr/bin/env python3
"""
Built-in oracle checks for turnpike-lab.

Checks:
- Laplacian eigenvector (sin(pi x) is an exact discrete eigenvector)
- Elliptic quadratic solution (f = 0, u = 1 gives x(1-x)/2 at the nodes)
- Gradient against central finite differences (5 seeded directions)
- Gradient against the assembled dense linear map (f = 0)
- Energy identity residual at nt and 2nt (first order in dt)
- Exponential fit on a synthetic exact exponential
- Structural hypotheses of the configured problem

Run standalone (`python selfcheck.py`) or through `turnpike_lab.py check`.
"""

from __future__ import annotations

import argparse
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

import console
from grid import Grid, laplacian_apply, principal_eigenvalue
from optimize import evaluate_cost, gradient
from parabolic import energy_identity_residual, scheme_for, solve_forward
from problem import Discretization, Nonlinearity, Profile, ProblemSpec, validate_spec
from steady import solve_elliptic
from turnpike import fit_exponential_rates


@dataclass
class CheckResult:
    name: str
    status: str  # PASS, WARN, FAIL
    detail: str

    def as_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "detail": self.detail}


def add_result(results: list[CheckResult], name: str, status: str, detail: str) -> None:
    results.append(CheckResult(name=name, status=status, detail=detail))


def _status(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


# ============================================================================
# Oracle instances
# ============================================================================

def gradient_check_instance() -> tuple[ProblemSpec, Discretization]:
    """Small cubic instance for finite-difference checks."""
    spec = ProblemSpec(control=(0.0, 0.5), observation=(0.25, 1.0), beta=10.0, horizon=0.2,
                       target=Profile("0.5"), initial=Profile("sin(pi*x)"),
                       nonlinearity=Nonlinearity.cubic())
    return spec, Discretization(nx=20, nt=20)


def random_control(spec: ProblemSpec, disc: Discretization, rng: np.random.Generator) -> np.ndarray:
    sch = scheme_for(spec, disc)
    return rng.standard_normal((disc.nt, disc.nx)) * sch.mask_control


def directional_errors(spec: ProblemSpec, disc: Discretization, seed: int = 0,
                       directions: int = 5, eps: float = 1e-5) -> list[float]:
    """Relative error of <grad, v> against (J(u + eps v) - J(u - eps v)) / 2 eps."""
    rng = np.random.default_rng(seed)
    sch = scheme_for(spec, disc)
    u = random_control(spec, disc, rng)
    g = gradient(spec, disc, u)
    w = sch.dt * sch.grid.h
    errors = []
    for _ in range(directions):
        v = random_control(spec, disc, rng)
        analytic = w * float(np.sum(g * v))
        fd = (evaluate_cost(spec, disc, u + eps * v).total
              - evaluate_cost(spec, disc, u - eps * v).total) / (2.0 * eps)
        errors.append(abs(analytic - fd) / max(abs(fd), 1e-300))
    return errors


def dense_gradient(spec: ProblemSpec, disc: Discretization, u) -> np.ndarray:
    """Gradient of J_T for f = 0 from the assembled affine map U -> Y.

    Y = Y(0) + S U, so grad = U + beta S^T W0 (Y(U) - z) in the dt*h inner product.
    """
    if not spec.nonlinearity.is_zero:
        raise ValueError("dense gradient oracle needs f = 0")
    sch = scheme_for(spec, disc)
    nt, nx = disc.nt, disc.nx
    base = solve_forward(spec, disc, np.zeros((nt, nx))).values[1:].ravel()
    support = np.flatnonzero(np.tile(sch.mask_control, nt))
    S = np.zeros((nt * nx, nt * nx))
    for j in support:
        e = np.zeros(nt * nx)
        e[j] = 1.0
        S[:, j] = solve_forward(spec, disc, e.reshape(nt, nx)).values[1:].ravel() - base
    U = np.asarray(u, dtype=float).ravel()
    W0 = np.tile(sch.mask_observation, nt)
    residual = base + S @ U - np.tile(sch.z, nt)
    g = U + spec.beta * S.T @ (W0 * residual)
    return (g * np.tile(sch.mask_control, nt)).reshape(nt, nx)


def energy_instance(nt: int = 20000) -> tuple[ProblemSpec, Discretization]:
    spec = ProblemSpec(control=(0.0, 1.0), observation=(0.0, 1.0), beta=0.0, horizon=0.5,
                       target=Profile("0"), initial=Profile("sin(pi*x)"),
                       nonlinearity=Nonlinearity.zero())
    return spec, Discretization(nx=200, nt=nt)


# ============================================================================
# Checks
# ============================================================================

def check_laplacian(results: list[CheckResult]) -> None:
    grid = Grid(0.0, 1.0, 99)
    v = np.sin(math.pi * grid.x)
    lam = principal_eigenvalue(grid)
    err = float(np.max(np.abs(laplacian_apply(grid, v) + lam * v)) / np.max(np.abs(lam * v)))
    add_result(results, "Laplacian eigenvector", _status(err <= 1e-12), f"rel err {err:.2e} (tol 1e-12)")


def check_elliptic(results: list[CheckResult]) -> None:
    spec = ProblemSpec(control=(0.0, 1.0), nonlinearity=Nonlinearity.zero())
    grid = Grid(0.0, 1.0, 99)
    y = solve_elliptic(spec, grid, np.ones(grid.nx))
    err = float(np.max(np.abs(y - grid.x * (1.0 - grid.x) / 2.0)))
    add_result(results, "Elliptic quadratic", _status(err <= 1e-10), f"max err {err:.2e} (tol 1e-10)")


def check_gradient_fd(results: list[CheckResult], seed: int) -> None:
    spec, disc = gradient_check_instance()
    errors = directional_errors(spec, disc, seed=seed)
    worst = max(errors)
    add_result(results, "Gradient vs FD", _status(worst <= 1e-6),
               f"worst rel err {worst:.2e} over {len(errors)} directions (tol 1e-6)")


def check_dense_adjoint(results: list[CheckResult], seed: int) -> None:
    spec = ProblemSpec(control=(0.0, 0.7), observation=(0.2, 1.0), beta=5.0, horizon=0.05,
                       target=Profile("1"), initial=Profile("sin(pi*x)"), nonlinearity=Nonlinearity.zero())
    disc = Discretization(nx=5, nt=5)
    u = random_control(spec, disc, np.random.default_rng(seed))
    err = float(np.max(np.abs(gradient(spec, disc, u) - dense_gradient(spec, disc, u))))
    add_result(results, "Adjoint vs dense map", _status(err <= 1e-10), f"max abs err {err:.2e} (tol 1e-10)")


def check_energy_identity(results: list[CheckResult], nt: int = 20000) -> None:
    residuals = []
    for n in (nt, 2 * nt):
        spec, disc = energy_instance(n)
        traj = solve_forward(spec, disc, np.zeros((disc.nt, disc.nx)))
        residuals.append(energy_identity_residual(spec, disc, traj, np.zeros((disc.nt, disc.nx))))
    ratio = residuals[0] / residuals[1] if residuals[1] > 0.0 else math.inf
    ok_size = residuals[0] <= 0.02
    ok_order = 1.7 <= ratio <= 2.3
    status = "PASS" if ok_size and ok_order else ("WARN" if ok_size else "FAIL")
    add_result(results, "Energy identity", status,
               f"residual {residuals[0]:.2e} (tol 2e-2), nt/2nt ratio {ratio:.3f} (want 1.7..2.3)")


def check_exponential_fit(results: list[CheckResult]) -> None:
    t = np.linspace(0.0, 3.0, 100)
    fit = fit_exponential_rates(t, 4.0 * np.exp(-1.8 * t))
    err = max(abs(fit.K - 4.0), abs(fit.mu - 1.8))
    add_result(results, "Exponential fit", _status(err <= 1e-9 and fit.residual <= 1e-12),
               f"K={fit.K:.12f} mu={fit.mu:.12f} residual {fit.residual:.1e}")


def check_config(results: list[CheckResult], spec: Optional[ProblemSpec]) -> None:
    violations = validate_spec(spec or ProblemSpec())
    if violations:
        add_result(results, "Problem hypotheses", "FAIL", "; ".join(violations))
    else:
        add_result(results, "Problem hypotheses", "PASS", "structural hypotheses hold")


def run_checks(spec: Optional[ProblemSpec] = None, seed: int = 0, energy_nt: int = 20000) -> list[CheckResult]:
    results: list[CheckResult] = []
    check_laplacian(results)
    check_elliptic(results)
    check_gradient_fd(results, seed)
    check_dense_adjoint(results, seed)
    check_energy_identity(results, energy_nt)
    check_exponential_fit(results)
    check_config(results, spec)
    return results


def print_report(results: list[CheckResult]) -> int:
    console.banner("turnpike-lab - Oracle Checks")
    if console.verbosity() >= console.NORMAL:
        for r in results:
            print(f"[{r.status:<4}] {r.name:<22} {r.detail}")
    console.rule()

    fail_count = sum(1 for r in results if r.status == "FAIL")
    warn_count = sum(1 for r in results if r.status == "WARN")

    if fail_count == 0 and warn_count == 0:
        console.info("Overall: PASS")
    elif fail_count == 0:
        console.warn(f"Overall: PASS with warnings ({warn_count} warning(s))")
    else:
        console.error(f"Overall: FAIL ({fail_count} failure(s), {warn_count} warning(s))")

    return 0 if fail_count == 0 else 1


def main() -> int:
    parser = argparse.ArgumentParser(description="Run the built-in numerical oracle checks.")
    parser.add_argument("--seed", type=int, default=0, help="Seed for the random gradient directions")
    parser.add_argument("--energy-nt", type=int, default=20000, help="Time steps of the energy identity check")
    args = parser.parse_args()
    return print_report(run_checks(seed=args.seed, energy_nt=args.energy_nt))


if __name__ == "__main__":
    raise SystemExit(main())
