"""Proximal variance-reduced stochastic gradient methods with certified linear rates."""

from . import data, dual, problems, rates, sampling, solver
from .errors import *  # noqa: F401,F403
from .problems import FiniteSumProblem, LeastSquaresProblem, ProxOperator, build_least_squares
from .rates import RateCertificate, RateInputs, solve_optimal_rate, solve_rate_fixed_lambda
from .sampling import PrimalDistribution
from .solver import LyapunovSpec, RunConfig, Trace, run

__version__ = "0.1.0"
