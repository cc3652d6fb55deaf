import numpy as np
import pytest

import optimize
from errors import BlowUpError, DivergenceError
from grid import Grid, principal_eigenvalue
from optimize import (OptimizerOptions, constant_control, cost_increased, evaluate_cost, gradient,
                      gradient_descent, optimality_system_residual, resolve_stepsize, sanity_bounds)
from parabolic import solve_forward, zero_control
from problem import Discretization, Nonlinearity, Profile, ProblemSpec
from selfcheck import directional_errors, gradient_check_instance
from steady import solve_steady_optimum


@pytest.fixture
def linear_tracking():
    """f = 0, tracking z = 1 everywhere; the gradient at u = 0 is nonzero."""
    return ProblemSpec(control=(0.0, 1.0), observation=(0.0, 1.0), beta=10.0, horizon=0.5,
                       target=Profile("1"), initial=Profile("sin(pi*x)"),
                       nonlinearity=Nonlinearity.zero())


def test_control_term_of_unit_control(heat_spec):
    disc = Discretization(nx=30, nt=40)
    cost = evaluate_cost(heat_spec, disc, np.ones((disc.nt, disc.nx)))
    h = disc.h(heat_spec)
    assert cost.control_term == pytest.approx(0.5 * heat_spec.horizon * h * disc.nx, rel=1e-13)
    assert cost.tracking_term == 0.0  # beta = 0
    assert cost.trajectory is not None


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradient_matches_finite_differences(seed):
    spec, disc = gradient_check_instance()
    assert max(directional_errors(spec, disc, seed=seed)) <= 1e-6


def test_gradient_vanishes_off_control_region(small_cubic):
    spec, disc = small_cubic
    g = gradient(spec, disc, zero_control(spec, disc))
    grid = Grid.for_problem(spec, disc)
    assert np.all(g[:, grid.mask(spec.control) == 0.0] == 0.0)
    assert np.any(g != 0.0)


def test_zero_data_is_already_optimal(zero_spec):
    disc = Discretization(nx=20, nt=20)
    result = gradient_descent(zero_spec, disc)
    assert result.iterations == 0
    assert result.termination == "grad_tol"
    assert result.cost.total == 0.0
    assert np.all(result.control == 0.0)


def test_descent_converges_and_decreases_cost(small_cubic):
    spec, disc = small_cubic
    result = gradient_descent(spec, disc)
    assert result.termination == "grad_tol"
    assert result.grad_norm <= 1e-6
    assert result.restarts == 0
    costs = result.cost_history
    assert all(b <= a + 1e-12 * abs(a) for a, b in zip(costs, costs[1:]))
    assert optimality_system_residual(spec, disc, result) <= 2e-6
    assert np.all(result.control[:, Grid.for_problem(spec, disc).mask(spec.control) == 0.0] == 0.0)


def test_optimum_beats_simple_strategies(small_cubic):
    spec, disc = small_cubic
    result = gradient_descent(spec, disc)
    pair = solve_steady_optimum(spec, Grid.for_problem(spec, disc))
    bounds = sanity_bounds(spec, disc, result, pair)
    assert bounds["below_zero_control"]
    assert bounds["below_steady_held"]
    assert result.cost.total <= bounds["JT_zero_control"]


def test_result_report(small_cubic):
    spec, disc = small_cubic
    report = gradient_descent(spec, disc, opts=OptimizerOptions(max_iters=2)).as_dict()
    assert report["label"] == "stationary point"
    assert report["termination"] == "max_iters"
    assert report["iterations"] == 2
    assert report["JT"] == pytest.approx(report["control_term"] + report["tracking_term"])


def test_stepsize_modes(small_cubic):
    spec, disc = small_cubic
    lam = principal_eigenvalue(Grid.for_problem(spec, disc))
    assert resolve_stepsize(spec, disc, OptimizerOptions()) == pytest.approx(1.0 / (1.0 + 10.0 / lam ** 2))
    assert resolve_stepsize(spec, disc, OptimizerOptions(stepsize_mode="horizon")) == pytest.approx(1.0 / 6.0)
    assert resolve_stepsize(spec, disc, OptimizerOptions(stepsize_mode="fixed", stepsize=0.3)) == 0.3
    with pytest.raises(ValueError):
        resolve_stepsize(spec, disc, OptimizerOptions(stepsize_mode="fixed"))
    with pytest.raises(ValueError):
        resolve_stepsize(spec, disc, OptimizerOptions(stepsize_mode="armijo"))


def test_divergence_is_reported_after_restarts(linear_tracking):
    disc = Discretization(nx=20, nt=20)
    opts = OptimizerOptions(stepsize_mode="fixed", stepsize=50.0, restarts=2)
    with pytest.raises(DivergenceError) as info:
        gradient_descent(linear_tracking, disc, opts=opts)
    assert info.value.stepsize == pytest.approx(12.5)
    assert info.value.to_dict()["suggested_stepsize"] == pytest.approx(6.25)
    assert info.value.exit_code == 4


def test_divergence_restart_halves_stepsize(linear_tracking):
    disc = Discretization(nx=20, nt=20)
    opts = OptimizerOptions(stepsize_mode="fixed", stepsize=2.5, restarts=3)
    result = gradient_descent(linear_tracking, disc, opts=opts)
    assert result.restarts == 1
    assert result.stepsize == pytest.approx(1.25)
    assert result.termination == "grad_tol"


def test_optimum_does_not_depend_on_stepsize(small_cubic):
    spec, disc = small_cubic
    big = gradient_descent(spec, disc, opts=OptimizerOptions(stepsize_mode="fixed", stepsize=0.5))
    small = gradient_descent(spec, disc, opts=OptimizerOptions(stepsize_mode="fixed", stepsize=0.25))
    assert abs(big.cost.total - small.cost.total) <= 0.005 * abs(small.cost.total)


def test_warm_start_from_held_steady_control(small_cubic):
    spec, disc = small_cubic
    pair = solve_steady_optimum(spec, Grid.for_problem(spec, disc))
    u0 = constant_control(pair, disc)
    assert u0.shape == (disc.nt, disc.nx)
    result = gradient_descent(spec, disc, u0=u0)
    assert result.cost_history[0] == pytest.approx(evaluate_cost(spec, disc, u0).total)
    with pytest.raises(ValueError):
        constant_control(pair, Discretization(nx=disc.nx + 1, nt=disc.nt))


def test_cost_of_zero_control_with_zero_state():
    spec = ProblemSpec(horizon=2.0, initial=Profile("0"))  # z = 1, beta = 1000, w0 = Omega
    disc = Discretization(nx=20, nt=40)
    cost = evaluate_cost(spec, disc, zero_control(spec, disc))
    h = disc.h(spec)
    # 1000 |w0| T / 2 with |w0| = h nx
    assert cost.total == pytest.approx(500.0 * 2.0 * h * disc.nx, rel=1e-13)
    assert cost.control_term == 0.0


def test_cost_matches_direct_quadrature(reference_spec):
    disc = Discretization.from_dt(reference_spec, 20, 1e-3)
    cost = evaluate_cost(reference_spec, disc, zero_control(reference_spec, disc))
    Y = cost.trajectory.values
    h, dt = disc.h(reference_spec), disc.dt(reference_spec)
    total = 0.0
    for k in range(1, disc.nt + 1):
        total += dt * sum(h * (Y[k, i] - 1.0) ** 2 for i in range(disc.nx))
    assert cost.total == pytest.approx(0.5 * reference_spec.beta * total, rel=1e-12)


def test_descent_without_tracking_shrinks_geometrically(heat_spec):
    disc = Discretization(nx=15, nt=10)
    u0 = np.ones((disc.nt, disc.nx))
    opts = OptimizerOptions(stepsize_mode="fixed", stepsize=0.3, max_iters=5, grad_tol=0.0)
    result = gradient_descent(heat_spec, disc, u0=u0, opts=opts)
    np.testing.assert_allclose(result.control, 0.7 ** 5 * u0, rtol=1e-12, atol=0)
    costs = np.array(result.cost_history)
    np.testing.assert_allclose(costs, costs[0] * 0.49 ** np.arange(6), rtol=1e-12, atol=0)


def test_round_off_is_not_a_cost_increase():
    j = 1122.0
    assert not cost_increased(j + 2.73e-12, j)
    assert not cost_increased(1e-14, 0.0)
    assert cost_increased(j * (1.0 + 1e-9), j)
    assert not cost_increased(j - 1.0, j)


def test_descent_at_optimum_keeps_going_without_restarts(small_cubic):
    spec, disc = small_cubic
    first = gradient_descent(spec, disc)
    opts = OptimizerOptions(grad_tol=0.0, max_iters=30, restarts=0)
    more = gradient_descent(spec, disc, u0=first.control, opts=opts)
    assert more.restarts == 0
    assert more.termination == "max_iters"
    assert more.iterations == 30
    assert more.cost.total <= first.cost.total * (1.0 + 1e-12)


def test_restart_resumes_from_best_iterate(linear_tracking, monkeypatch):
    disc = Discretization(nx=20, nt=20)
    opts = OptimizerOptions(stepsize_mode="fixed", stepsize=1.0, restarts=1)
    plain = gradient_descent(linear_tracking, disc, opts=opts)
    assert plain.iterations > 4

    calls = {"n": 0}

    def blow_up_once(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 5:  # forward solve of iteration 4
            raise BlowUpError(step=1)
        return solve_forward(*args, **kwargs)

    monkeypatch.setattr(optimize, "solve_forward", blow_up_once)
    result = gradient_descent(linear_tracking, disc, opts=opts)
    assert result.restarts == 1
    assert result.stepsize == pytest.approx(0.5)
    assert result.termination == "grad_tol"
    assert result.cost_history[:4] == plain.cost_history[:4]
    costs = result.cost_history
    assert all(b <= a + 1e-12 * abs(a) for a, b in zip(costs, costs[1:]))


@pytest.mark.slow
def test_reference_optimum_does_not_depend_on_stepsize(reference_spec):
    disc = Discretization.from_dt(reference_spec, 40, 2e-3)
    s = resolve_stepsize(reference_spec, disc, OptimizerOptions())
    full = gradient_descent(reference_spec, disc, opts=OptimizerOptions(stepsize_mode="fixed", stepsize=s))
    half = gradient_descent(reference_spec, disc,
                            opts=OptimizerOptions(stepsize_mode="fixed", stepsize=0.5 * s))
    assert full.termination == half.termination == "grad_tol"
    assert full.restarts == half.restarts == 0
    assert abs(full.cost.total - half.cost.total) <= 0.005 * abs(half.cost.total)
