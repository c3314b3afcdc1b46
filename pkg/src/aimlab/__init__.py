"""Numerical experiments on SGD for interpolation problems under the aiming condition.

The package measures regularity constants (PL, quadratic growth, aiming,
smoothness) on small testbeds and wide networks, runs SGD with exact
escape monitoring, and checks the resulting rates and probability bounds by
simulation.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .problem import FiniteSumProblem, RegionSpec, StochasticProblem, derive_rng, fd_grad_check
from .testbed import InterpLinearRegression, ManifoldIntersection, ParabolaProblem, make_regression, parabola_project
from .network import NetworkProblem, NetworkSpec, desk_dataset, init_weights, lambda0, make_nn_problem
from .regularity import RegularityReport, estimate_regularity
from .sgd import SGDConfig, Trajectory, run_gd, run_sgd
from .rates import fit_rate, iteration_bound, table1_rates, theoretical_factor
