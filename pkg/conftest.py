"""Shared fixtures for the turnpike-lab tests."""

import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import console
from grid import Grid
from problem import Discretization, Nonlinearity, Profile, ProblemSpec


@pytest.fixture(autouse=True)
def quiet_console():
    level = console.verbosity()
    console.set_verbosity(console.QUIET)
    yield
    console.set_verbosity(level)


@pytest.fixture
def unit_grid():
    return Grid(0.0, 1.0, 99)


@pytest.fixture
def heat_spec():
    """f = 0, control and tracking everywhere, y0 = sin(pi x)."""
    return ProblemSpec(control=(0.0, 1.0), observation=(0.0, 1.0), beta=0.0, horizon=0.5,
                       target=Profile("0"), initial=Profile("sin(pi*x)"),
                       nonlinearity=Nonlinearity.zero())


@pytest.fixture
def zero_spec():
    """Reference layout with zero data: every optimum is zero."""
    return ProblemSpec(horizon=1.0, target=Profile("0"), initial=Profile("0"))


@pytest.fixture
def reference_spec():
    return ProblemSpec()


@pytest.fixture
def small_cubic():
    spec = ProblemSpec(control=(0.0, 0.5), observation=(0.0, 1.0), beta=10.0, horizon=0.5,
                       target=Profile("0.5"), initial=Profile("2*sin(pi*x)"),
                       nonlinearity=Nonlinearity.cubic())
    return spec, Discretization(nx=20, nt=50)
