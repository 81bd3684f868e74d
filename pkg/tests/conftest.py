import numpy as np
import pytest

from salientflow.field_core import GridShape, VectorField2


def saddle(n=64, c=None, k=1.0):
    """Linear saddle u = k(x - c), v = -k(y - c) on an n x n grid."""
    c = (n - 1) / 2.0 if c is None else c
    return VectorField2.from_function(GridShape(n, n), lambda x, y: (k * (x - c), -k * (y - c)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
