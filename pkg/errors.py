"""
errors.py

Exception types shared by the solvers and the command script.

The command script maps each family to an exit code:
- ConfigError     -> 2
- SolverError     -> 3 (BlowUpError, NewtonError, AnalysisError)
- OptimizerError  -> 4 (DivergenceError)
"""
from __future__ import annotations

from typing import Any, Dict, List, Optional


class TurnpikeLabError(Exception):
    """Base class. `kind` is the machine-readable tag written to error.json."""

    kind = "error"
    exit_code = 1

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"error": self.kind, "message": self.message}
        for key, value in self.details.items():
            out[key] = value
        return out


class ConfigError(TurnpikeLabError):
    kind = "config"
    exit_code = 2

    def __init__(self, message: str, violations: Optional[List[str]] = None):
        super().__init__(message, violations=list(violations or []))
        self.violations = list(violations or [])


class SolverError(TurnpikeLabError):
    kind = "solver"
    exit_code = 3


class BlowUpError(SolverError):
    kind = "blow_up"

    def __init__(self, step: int, suggested_dt: Optional[float] = None, message: str = ""):
        msg = message or f"non-finite state at step {step}"
        if suggested_dt is not None:
            msg += f" (try dt <= {suggested_dt:.3e})"
        super().__init__(msg, step=step, suggested_dt=suggested_dt)
        self.step = step
        self.suggested_dt = suggested_dt


class NewtonError(SolverError):
    kind = "newton"

    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"Newton did not converge after {iterations} iterations (residual {residual:.3e})",
            residual=residual,
            iterations=iterations,
        )
        self.residual = residual
        self.iterations = iterations


class AnalysisError(SolverError):
    """A computed run is too coarse for the requested diagnostics."""

    kind = "analysis"


class OptimizerError(TurnpikeLabError):
    kind = "optimizer"
    exit_code = 4


class DivergenceError(OptimizerError):
    kind = "divergence"

    def __init__(self, stepsize: float, iteration: int, message: str = ""):
        msg = message or (
            f"cost increased for 3 consecutive iterations at stepsize {stepsize:.3e} "
            f"(iteration {iteration}); try a smaller stepsize"
        )
        super().__init__(msg, stepsize=stepsize, iteration=iteration, suggested_stepsize=stepsize / 2)
        self.stepsize = stepsize
        self.iteration = iteration
