import numpy as np
import pytest

from qgl.ensemble import LengthDistribution, sample_lengths
from qgl.lattice import build_cube, subgraph
from qgl.reduction import LengthField


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def single_edge(length=1.0, l_min=0.5, l_max=1.5):
    g = subgraph(1, [((0,), 1)])
    return g, LengthField(np.array([float(length)]), l_min, l_max)


def random_instance(d, n, seed, realization=0, l_min=0.8, l_max=1.2, kind="raised_cosine"):
    cube = build_cube(d, n)
    return cube, sample_lengths(LengthDistribution(kind, l_min, l_max), cube, seed, realization)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
