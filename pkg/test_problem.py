import math

import numpy as np
import pytest

from problem import (Discretization, Nonlinearity, Profile, ProblemSpec, validate_discretization,
                     validate_spec)


def test_reference_instance_is_valid(reference_spec):
    assert validate_spec(reference_spec) == []


def test_negative_beta_is_one_violation():
    violations = validate_spec(ProblemSpec(beta=-1.0))
    assert len(violations) == 1
    assert "beta" in violations[0]


def test_decreasing_nonlinearity_is_one_violation():
    spec = ProblemSpec(nonlinearity=Nonlinearity(kind="power", exponent=1.0, coefficient=-1.0))
    violations = validate_spec(spec)
    assert len(violations) == 1
    assert "monotone" in violations[0]


def test_validation_is_deterministic():
    spec = ProblemSpec(beta=-2.0, control=(0.2, 1.5))
    assert validate_spec(spec) == validate_spec(spec)


@pytest.mark.parametrize("control", [(0.5, 0.5), (0.6, 0.2), (-0.1, 0.5), (0.0, 1.2)])
def test_bad_subdomain_is_reported(control):
    violations = validate_spec(ProblemSpec(control=control))
    assert len(violations) == 1
    assert "omega" in violations[0]


def test_nonpositive_horizon_is_reported():
    assert any("horizon" in v for v in validate_spec(ProblemSpec(horizon=0.0)))


def test_unbounded_profile_is_reported():
    with np.errstate(divide="ignore"):
        violations = validate_spec(ProblemSpec(initial=Profile("1/x")))
    assert any("not bounded" in v for v in violations)


def test_broken_profile_expression_is_reported():
    violations = validate_spec(ProblemSpec(target=Profile("sin(")))
    assert any("cannot be evaluated" in v for v in violations)


def test_cubic_values_are_exact():
    f = Nonlinearity.cubic()
    assert float(f.f(2.0)) == 8.0
    assert float(f.df(2.0)) == 12.0
    assert float(f.d2f(2.0)) == 12.0
    assert float(f.primitive(2.0)) == 4.0


def test_even_power_uses_odd_extension():
    f = Nonlinearity(kind="power", exponent=2.0)
    assert float(f.f(-2.0)) == -4.0
    assert float(f.df(-2.0)) == 4.0
    assert float(f.primitive(-2.0)) == pytest.approx(8.0 / 3.0, rel=1e-15)
    assert validate_spec(ProblemSpec(nonlinearity=f)) == []


def test_zero_nonlinearity():
    f = Nonlinearity.zero()
    y = np.linspace(-3.0, 3.0, 7)
    assert f.is_zero
    assert f.describe() == "0"
    assert np.all(f.f(y) == 0.0)
    assert np.all(f.primitive(y) == 0.0)


def test_tabulated_cubic_matches_table_and_validates():
    ys = np.linspace(-3.0, 3.0, 13)
    f = Nonlinearity.tabulated(ys, ys ** 3)
    np.testing.assert_allclose(f.f(ys), ys ** 3, rtol=0, atol=1e-12)
    assert float(f.f(0.0)) == 0.0
    assert float(f.primitive(0.0)) == 0.0
    assert np.all(f.df(np.linspace(-20.0, 20.0, 81)) >= 0.0)
    spec = ProblemSpec(initial=Profile("1"), target=Profile("1"), nonlinearity=f)
    assert validate_spec(spec) == []


def test_tabulated_primitive_is_antiderivative():
    ys = np.linspace(-2.0, 2.0, 9)
    f = Nonlinearity.tabulated(ys, ys + ys ** 3)
    y = np.linspace(-4.0, 4.0, 33)
    eps = 1e-5
    fd = (f.primitive(y + eps) - f.primitive(y - eps)) / (2 * eps)
    np.testing.assert_allclose(fd, f.f(y), rtol=1e-7, atol=1e-7)
    assert f.primitive(np.array(1.5)).shape == ()


def test_tabulated_second_derivative_is_piecewise():
    ys = np.linspace(-2.0, 2.0, 9)
    f = Nonlinearity.tabulated(ys, ys ** 3)
    mids = 0.5 * (ys[:-1] + ys[1:])
    eps = 1e-6
    fd = (f.df(mids + eps) - f.df(mids - eps)) / (2 * eps)
    np.testing.assert_allclose(f.d2f(mids), fd, rtol=1e-5, atol=1e-5)
    # right-hand value at an interior node, zero on the linear continuation
    node = ys[4]
    assert float(f.d2f(node)) == pytest.approx(float(f.d2f(node + 1e-9)), abs=1e-6)
    assert np.all(f.d2f(np.array([-5.0, 5.0])) == 0.0)


def test_unsorted_table_is_reported():
    f = Nonlinearity.tabulated([0.0, 1.0, 0.5], [0.0, 1.0, 2.0])
    assert any("strictly increasing" in v for v in validate_spec(ProblemSpec(nonlinearity=f)))


def test_profiles():
    x = np.linspace(0.0, 1.0, 11)
    np.testing.assert_allclose(Profile("2*sin(pi*x)").sample(x), 2 * np.sin(math.pi * x))
    assert np.all(Profile.constant(3.5).sample(x) == 3.5)
    nodes = x[1:-1]
    values = np.cos(nodes)
    np.testing.assert_array_equal(Profile.tabulated(nodes, values).sample(nodes), values)


def test_discretization_from_dt(reference_spec):
    disc = Discretization.from_dt(reference_spec, 100, 1e-4)
    assert disc.nt == 50000
    assert disc.h(reference_spec) == pytest.approx(1.0 / 101)
    assert disc.dt(reference_spec) == pytest.approx(1e-4)


def test_discretization_violations():
    assert validate_discretization(Discretization(nx=100, nt=10)) == []
    assert len(validate_discretization(Discretization(nx=1, nt=0))) == 2


def test_with_horizon_keeps_everything_else(reference_spec):
    longer = reference_spec.with_horizon(12.0)
    assert longer.horizon == 12.0
    assert longer.beta == reference_spec.beta
    assert longer.as_dict()["initial"] == "10"
