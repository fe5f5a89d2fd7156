"""Shared fixtures: the worked problem instances used across the suite."""

import numpy as np
import pytest

from ringsolve import LinearProblem


@pytest.fixture
def neg2x2():
    """All-negative 2x2 system; solution is [-0.09, -0.06]."""
    return LinearProblem([[-4.0, -1.5], [-2.0, -1.0]], [0.45, 0.24])


@pytest.fixture
def pos2x2():
    """All-positive 2x2 system; solution is [0.09, 0.06]."""
    return LinearProblem([[4.0, 1.5], [2.0, 1.0]], [0.45, 0.24])


@pytest.fixture
def mixed2x2():
    """Mixed-sign 2x2 system; solution is [-0.09, 0.06]."""
    return LinearProblem([[-4.0, 1.5], [-2.0, 1.0]], [0.45, 0.24])


@pytest.fixture
def neg2x2_small_b():
    """The all-negative matrix with the memristor-demo input [0.07, 0.02]."""
    return LinearProblem([[-4.0, -1.5], [-2.0, -1.0]], [0.07, 0.02])


@pytest.fixture
def mixed8x8():
    """8x8 with 0.5 on the diagonal and -1 elsewhere; x = [0.05, -0.05 x7]."""
    a = -np.ones((8, 8)) + 1.5 * np.eye(8)
    b = np.array([0.375] + [0.225] * 7)
    return LinearProblem(a, b, symmetric=True)


@pytest.fixture
def x8_expected():
    return np.array([0.05] + [-0.05] * 7)
