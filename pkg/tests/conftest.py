import numpy as np
import pytest

from aimlab.network import NetworkSpec, desk_dataset, init_weights, make_nn_problem
from aimlab.testbed import InterpLinearRegression, ManifoldIntersection, ParabolaProblem, make_regression


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def parabola():
    return ParabolaProblem(1.0)


@pytest.fixture
def regression():
    return make_regression(8, 32, np.random.default_rng(3))


@pytest.fixture
def axis_regression():
    return InterpLinearRegression(np.array([[1.0, 0.0]]), np.array([0.0]))


@pytest.fixture
def circles():
    return ManifoldIntersection.through_point(np.array([0.3, -0.2]), 4, np.random.default_rng(5))


def small_net(depth=3, width=8, input_dim=4, n=5, seed=0, activation="tanh"):
    spec = NetworkSpec(input_dim=input_dim, width=width, depth=depth, activation=activation)
    X, y = desk_dataset(n=n, input_dim=input_dim, seed=seed)
    return make_nn_problem(spec, init_weights(spec, seed), X, y)


# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
