import numpy as np
import pytest

from ffreg.grid import make_uniform_grid
from ffreg.simulation import DGPConfig, gen_dgp

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    """Collects one line per acceptance criterion for the terminal summary."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def grid200():
    return make_uniform_grid(0.0, 1.0, 200)


@pytest.fixture(scope="session")
def dgp_small():
    """DGP1 sample at T=300 on a 60-point grid."""
    return gen_dgp(DGPConfig(T=300, seed=11, P=60))
