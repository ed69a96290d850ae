import math

import pytest

from qkdv.lattice import CoeffField, random_hermitian
from qkdv.picard import SolverConfig, horizon, solve

LN10 = math.log(10.0)
C0 = 3.918


def two_mode_field(radius=8):
    return CoeffField(1, radius, {(1,): 0.1, (-1,): 0.1}, (1.0, LN10))


def tree_field(seed=7):
    return random_hermitian(1, 3, 0.1, LN10, seed)


@pytest.fixture(scope="session")
def two_mode():
    c = two_mode_field()
    t0 = horizon(1.0, LN10, [1.0], C0)
    return solve(c, [1.0], SolverConfig(8, t0))


@pytest.fixture(scope="session")
def two_mode_wide():
    c = two_mode_field(10)
    t0 = horizon(1.0, LN10, [1.0], C0)
    return solve(c, [1.0], SolverConfig(10, t0))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
