import numpy as np
import pytest

from phaselock.graph_core import Lattice, build_lattice_graph


@pytest.fixture(scope="session")
def torus11():
    return build_lattice_graph(Lattice((11, 11), "torus"))


@pytest.fixture(scope="session")
def free11():
    return build_lattice_graph(Lattice((11, 11), "free"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
