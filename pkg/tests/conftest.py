import math

import numpy as np
import pytest

from cycledeg.adjointcycle import periodic_adjoint
from cycledeg.config import Analysis, bundled_config
from cycledeg.cyclefind import Section, find_cycle
from cycledeg.exprcore import SystemSpec
from cycledeg.malkinfn import sample_f

CIRCLE_PSI = ["-x2 + x1*(1 - x1^2 - x2^2)", "x1 + x2*(1 - x1^2 - x2^2)"]
VDP_PSI = ["x2", "(1 - x1^2)*x2 - x1"]
TWO_PI = 2 * math.pi


def circular_distance(a, b, T=TWO_PI):
    d = abs(a - b) % T
    return min(d, T - d)


def circle_spec(phi=("cos(t)", "sin(t)"), T=TWO_PI):
    return SystemSpec.from_text(CIRCLE_PSI, list(phi), T)


class Bundle:
    """Cycle, adjoint and sampled f for one system."""

    def __init__(self, spec, seed, section=Section(2, 0.0, 1)):
        self.spec = spec
        self.cycle = find_cycle(spec, seed, section)
        self.adj = periodic_adjoint(spec, self.cycle)
        self.bf = sample_f(self.cycle, self.adj, spec)


@pytest.fixture(scope="session")
def circle():
    return Bundle(circle_spec(), [1.1, 0.0])


@pytest.fixture(scope="session")
def circle_neg():
    return Bundle(circle_spec(("-cos(t)", "-sin(t)")), [1.1, 0.0])


@pytest.fixture(scope="session")
def vdp():
    return Analysis(bundled_config("vanderpol"))


@pytest.fixture(scope="session")
def bundled():
    return {name: Analysis(bundled_config(name)) for name in ("circle", "circle_box", "circle_ball", "vanderpol")}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        terminalreporter.write_line(results[k])
