"""
problem.py

Problem instance for semilinear heat-equation control on a 1D interval:

    minimise  J_T(u) = 1/2 int_0^T int_w |u|^2 + beta/2 int_0^T int_w0 |y - z|^2
    subject   y_t - y_xx + f(y) = u chi_w   in (0,T) x (a,b)
              y = 0 on the boundary, y(0) = y0

Everything here is immutable. validate_spec() reports violated structural
hypotheses as a list of strings instead of raising.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import List, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator

# Names usable inside profile expressions, e.g. "2*sin(pi*x)"
_PROFILE_NAMESPACE = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "where": np.where,
    "minimum": np.minimum,
    "maximum": np.maximum,
    "pi": math.pi,
}

NONLINEARITY_KINDS = ("power", "tabulated")


# ============================================================================
# Nonlinearity
# ============================================================================

@dataclass(frozen=True)
class Nonlinearity:
    """f(y) = coefficient * y|y|^(exponent-1), or a monotone PCHIP table.

    Tabulated nonlinearities continue linearly (with the end slopes) outside
    the table range. PCHIP is only C1: f'' jumps at interior table nodes, d2f
    returns the right-hand value there and 0 outside the table. Newton and the
    adjoint use f and f' only.
    """
    kind: str = "power"
    exponent: float = 3.0
    coefficient: float = 1.0
    table_y: Tuple[float, ...] = ()
    table_f: Tuple[float, ...] = ()

    @classmethod
    def zero(cls) -> "Nonlinearity":
        return cls(kind="power", exponent=1.0, coefficient=0.0)

    @classmethod
    def cubic(cls) -> "Nonlinearity":
        return cls(kind="power", exponent=3.0, coefficient=1.0)

    @classmethod
    def tabulated(cls, ys, fs) -> "Nonlinearity":
        return cls(kind="tabulated", table_y=tuple(float(v) for v in ys),
                   table_f=tuple(float(v) for v in fs))

    @property
    def is_zero(self) -> bool:
        return self.kind == "power" and self.coefficient == 0.0

    def describe(self) -> str:
        if self.kind == "tabulated":
            return f"tabulated({len(self.table_y)} nodes)"
        if self.is_zero:
            return "0"
        return f"{self.coefficient:g}*y|y|^{self.exponent - 1:g}"

    # -- power law helpers ---------------------------------------------------
    @property
    def _odd_integer(self) -> int:
        """Exponent as an odd int, or 0 when the general |y| form is needed."""
        p = self.exponent
        if float(p).is_integer() and int(p) % 2 == 1:
            return int(p)
        return 0

    # -- tabulated helpers ---------------------------------------------------
    @cached_property
    def _pchip(self) -> PchipInterpolator:
        return PchipInterpolator(np.asarray(self.table_y), np.asarray(self.table_f), extrapolate=True)

    @cached_property
    def _pchip_d1(self):
        return self._pchip.derivative(1)

    @cached_property
    def _pchip_d2(self):
        return self._pchip.derivative(2)

    @cached_property
    def _pchip_anti(self):
        return self._pchip.antiderivative(1)

    def _table_parts(self, y: np.ndarray):
        lo, hi = self.table_y[0], self.table_y[-1]
        yc = np.clip(y, lo, hi)
        d_lo = np.minimum(y - lo, 0.0)
        d_hi = np.maximum(y - hi, 0.0)
        s_lo = float(self._pchip_d1(lo))
        s_hi = float(self._pchip_d1(hi))
        return yc, d_lo, d_hi, s_lo, s_hi

    # -- evaluators ----------------------------------------------------------
    def f(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "tabulated":
            yc, d_lo, d_hi, s_lo, s_hi = self._table_parts(y)
            return self._pchip(yc) + s_lo * d_lo + s_hi * d_hi
        c = self.coefficient
        n = self._odd_integer
        if n == 1:
            return c * y
        if n:
            return c * y ** n
        return c * np.sign(y) * np.abs(y) ** self.exponent

    def df(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "tabulated":
            lo, hi = self.table_y[0], self.table_y[-1]
            yc, _, _, s_lo, s_hi = self._table_parts(y)
            return np.where(y < lo, s_lo, np.where(y > hi, s_hi, self._pchip_d1(yc)))
        c = self.coefficient
        n = self._odd_integer
        if n == 1:
            return np.full_like(y, c)
        if n:
            return c * n * y ** (n - 1)
        return c * self.exponent * np.abs(y) ** (self.exponent - 1.0)

    def d2f(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "tabulated":
            lo, hi = self.table_y[0], self.table_y[-1]
            inside = (y >= lo) & (y <= hi)
            return np.where(inside, self._pchip_d2(np.clip(y, lo, hi)), 0.0)
        c = self.coefficient
        n = self._odd_integer
        if n == 1:
            return np.zeros_like(y)
        if n:
            return c * n * (n - 1) * y ** (n - 2)
        p = self.exponent
        with np.errstate(divide="ignore", invalid="ignore"):
            out = c * p * (p - 1.0) * np.sign(y) * np.abs(y) ** (p - 2.0)
        return np.where(y == 0.0, 0.0, out)

    def primitive(self, y):
        """F(y) = int_0^y f."""
        y = np.asarray(y, dtype=float)
        if self.kind == "tabulated":
            base = self._table_antiderivative(np.zeros(1))[0]
            return (self._table_antiderivative(y) - base).reshape(y.shape)
        c = self.coefficient
        n = self._odd_integer
        if n:
            return c * y ** (n + 1) / (n + 1)
        return c * np.abs(y) ** (self.exponent + 1.0) / (self.exponent + 1.0)

    def _table_antiderivative(self, y: np.ndarray):
        # antiderivative of the continued table, zero at the first table node
        y = np.atleast_1d(y)
        lo, hi = self.table_y[0], self.table_y[-1]
        yc, d_lo, d_hi, s_lo, s_hi = self._table_parts(y)
        f_lo = float(self._pchip(lo))
        f_hi = float(self._pchip(hi))
        return (self._pchip_anti(yc)
                + f_lo * d_lo + 0.5 * s_lo * d_lo ** 2
                + f_hi * d_hi + 0.5 * s_hi * d_hi ** 2)


# ============================================================================
# Profiles (initial datum, target)
# ============================================================================

@dataclass(frozen=True)
class Profile:
    """A function of x: constant / closed-form expression, or node values.

    Node tables are linearly interpolated, so sampling on the grid the table
    came from returns the stored values exactly.
    """
    expr: str = "0"
    nodes: Tuple[float, ...] = ()
    values: Tuple[float, ...] = ()

    @classmethod
    def constant(cls, value: float) -> "Profile":
        return cls(expr=repr(float(value)))

    @classmethod
    def tabulated(cls, nodes, values) -> "Profile":
        return cls(expr="", nodes=tuple(float(v) for v in nodes),
                   values=tuple(float(v) for v in values))

    @property
    def is_tabulated(self) -> bool:
        return bool(self.nodes)

    def describe(self) -> str:
        if self.is_tabulated:
            return f"table({len(self.nodes)} nodes)"
        return self.expr

    def sample(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.is_tabulated:
            return np.interp(x, np.asarray(self.nodes), np.asarray(self.values))
        namespace = dict(_PROFILE_NAMESPACE)
        namespace["x"] = x
        value = eval(compile(self.expr, "<profile>", "eval"), {"__builtins__": {}}, namespace)
        return np.broadcast_to(np.asarray(value, dtype=float), x.shape).copy()


# ============================================================================
# Problem and discretization
# ============================================================================

@dataclass(frozen=True)
class ProblemSpec:
    """Defaults reproduce the reference instance: y0 = 10, z = 1, beta = 1000,
    f(y) = y^3, w = (0, 1/2), w0 = (0, 1), T = 5."""
    domain: Tuple[float, float] = (0.0, 1.0)
    control: Tuple[float, float] = (0.0, 0.5)
    observation: Tuple[float, float] = (0.0, 1.0)
    beta: float = 1000.0
    horizon: float = 5.0
    target: Profile = field(default_factory=lambda: Profile("1"))
    initial: Profile = field(default_factory=lambda: Profile("10"))
    nonlinearity: Nonlinearity = field(default_factory=Nonlinearity.cubic)

    @property
    def length(self) -> float:
        return self.domain[1] - self.domain[0]

    @property
    def controls_everywhere(self) -> bool:
        return tuple(self.control) == tuple(self.domain)

    def with_horizon(self, horizon: float) -> "ProblemSpec":
        return replace(self, horizon=float(horizon))

    def as_dict(self) -> dict:
        f = self.nonlinearity
        return {
            "domain": list(self.domain),
            "control": list(self.control),
            "observation": list(self.observation),
            "beta": self.beta,
            "horizon": self.horizon,
            "target": self.target.describe(),
            "initial": self.initial.describe(),
            "nonlinearity": {
                "kind": f.kind,
                "exponent": f.exponent,
                "coefficient": f.coefficient,
                "table_y": list(f.table_y),
                "table_f": list(f.table_f),
            },
        }


@dataclass(frozen=True)
class Discretization:
    """nx interior nodes, nt time steps; h and dt follow from the problem."""
    nx: int = 100
    nt: int = 50000

    @classmethod
    def from_dt(cls, spec: ProblemSpec, nx: int, dt: float) -> "Discretization":
        return cls(nx=int(nx), nt=max(1, int(round(spec.horizon / dt))))

    def h(self, spec: ProblemSpec) -> float:
        return spec.length / (self.nx + 1)

    def dt(self, spec: ProblemSpec) -> float:
        return spec.horizon / self.nt

    def as_dict(self, spec: ProblemSpec) -> dict:
        return {"nx": self.nx, "nt": self.nt, "h": self.h(spec), "dt": self.dt(spec)}


# ============================================================================
# Validation
# ============================================================================

def _check_interval(name: str, sub: Tuple[float, float], domain: Tuple[float, float]) -> List[str]:
    lo, hi = sub
    a, b = domain
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
        return [f"{name} = ({lo}, {hi}) is not a nonempty open interval"]
    if lo < a or hi > b:
        return [f"{name} = ({lo}, {hi}) is not contained in the domain ({a}, {b})"]
    return []


def _sup(profile: Profile, interval: Tuple[float, float], name: str, out: List[str]) -> float:
    x = np.linspace(interval[0], interval[1], 257)
    try:
        values = profile.sample(x)
    except Exception as e:
        out.append(f"{name} profile '{profile.describe()}' cannot be evaluated: {e}")
        return math.nan
    if not np.all(np.isfinite(values)):
        out.append(f"{name} profile '{profile.describe()}' is not bounded on ({interval[0]}, {interval[1]})")
        return math.nan
    return float(np.max(np.abs(values)))


def _check_nonlinearity(f: Nonlinearity, radius: float) -> List[str]:
    if f.kind not in NONLINEARITY_KINDS:
        return [f"nonlinearity kind '{f.kind}' is not one of {', '.join(NONLINEARITY_KINDS)}"]
    if f.kind == "power" and not f.exponent >= 1.0:
        return [f"nonlinearity exponent must be >= 1 (got {f.exponent})"]
    if f.kind == "tabulated":
        ys = np.asarray(f.table_y)
        if len(ys) < 2 or len(ys) != len(f.table_f):
            return ["nonlinearity table needs >= 2 nodes and matching y/f lengths"]
        if np.any(np.diff(ys) <= 0):
            return ["nonlinearity table nodes must be strictly increasing"]

    out: List[str] = []
    f0 = float(f.f(np.zeros(1))[0])
    if f0 != 0.0:
        out.append(f"nonlinearity must satisfy f(0) = 0 (got f(0) = {f0:.3e})")

    ys = np.linspace(-radius, radius, 401)
    slope = f.df(ys)
    monotone = bool(np.all(slope >= 0.0))
    if not monotone:
        i = int(np.argmin(slope))
        out.append(f"nonlinearity is not monotone: f'({ys[i]:.3g}) = {slope[i]:.3g} < 0")
    else:
        # implied by monotone f with f(0) = 0
        prim = f.primitive(ys)
        if np.any(prim < 0.0):
            i = int(np.argmin(prim))
            out.append(f"primitive F({ys[i]:.3g}) = {prim[i]:.3g} < 0")

    eps = 1e-5 * np.maximum(1.0, np.abs(ys))
    fd = (f.primitive(ys + eps) - f.primitive(ys - eps)) / (2.0 * eps)
    fv = f.f(ys)
    bad = np.abs(fd - fv) > 1e-8 * np.maximum(1.0, np.abs(fv))
    if np.any(bad):
        i = int(np.argmax(bad))
        out.append(f"primitive does not differentiate to f at y = {ys[i]:.3g}")
    return out


def validate_spec(spec: ProblemSpec) -> List[str]:
    """Return every violated structural hypothesis; empty list means valid."""
    out: List[str] = []
    a, b = spec.domain
    if not (math.isfinite(a) and math.isfinite(b)) or a >= b:
        return [f"domain = ({a}, {b}) is not a bounded nonempty interval"]

    out += _check_interval("control subdomain omega", spec.control, spec.domain)
    out += _check_interval("observation subdomain omega0", spec.observation, spec.domain)

    if not (math.isfinite(spec.beta) and spec.beta >= 0.0):
        out.append(f"beta must be >= 0 (got {spec.beta})")
    if not (math.isfinite(spec.horizon) and spec.horizon > 0.0):
        out.append(f"horizon T must be > 0 (got {spec.horizon})")

    sup_y0 = _sup(spec.initial, spec.domain, "initial datum y0", out)
    obs = spec.observation if spec.observation[0] < spec.observation[1] else spec.domain
    sup_z = _sup(spec.target, obs, "target z", out)

    radius = 10.0
    for s in (sup_y0, sup_z):
        if math.isfinite(s):
            radius = max(radius, 2.0 * s)
    out += _check_nonlinearity(spec.nonlinearity, radius)
    return out


def validate_discretization(disc: Discretization) -> List[str]:
    out: List[str] = []
    if int(disc.nx) != disc.nx or disc.nx < 2:
        out.append(f"nx must be an integer >= 2 (got {disc.nx})")
    if int(disc.nt) != disc.nt or disc.nt < 1:
        out.append(f"nt must be an integer >= 1 (got {disc.nt})")
    return out
