import numpy as np
import pytest

from vrgrad import problems


def random_least_squares(rng, n, dim, xi=0.0):
    """Full-column-rank dense instance with standard normal entries."""
    while True:
        A = rng.standard_normal((n, dim))
        if np.linalg.matrix_rank(A) == dim:
            break
    return problems.LeastSquaresProblem(A, rng.standard_normal(n), xi)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
