import sys

import numpy as np
import pytest

from roughsde import ConstantField, LinearField, VectorFieldSet, build_field


def scalar_linear(a=0.0, c=0.0, g=0.0):
    """``dX = g X dt + a X dB + c X dZ`` on R."""
    return VectorFieldSet(LinearField(np.array([[g]])), LinearField(np.array([[[a]]])),
                          LinearField(np.array([[[c]]])))


def additive(d=1, sigma=1.0, n=1):
    return VectorFieldSet(ConstantField(np.zeros(d), d), ConstantField(sigma * np.eye(d), d),
                          ConstantField(np.zeros((d, n)), d))


def bounded_nonlinear():
    """Two-dimensional smooth bounded coefficients with m = 2, n = 1."""
    b = build_field("sin", {"amplitude": [[0.3, 0.1], [0.0, -0.2]]}, 2, (2,))
    sigma = build_field("cos", {"amplitude": [[[0.4, 0.1], [0.1, 0.0]], [[0.0, 0.2], [0.3, 0.1]]]},
                        2, (2, 2))
    beta = build_field("tanh", {"amplitude": [[[0.5, 0.0]], [[0.1, 0.3]]]}, 2, (2, 1))
    return VectorFieldSet(b, sigma, beta)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
