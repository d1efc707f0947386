import numpy as np
import pytest

from qndsoliton.field import Envelope
from qndsoliton.units import make_grid


@pytest.fixture(scope="session")
def grid():
    return make_grid()


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(512, 40.0)


def sech_field(grid, amp=1.0, omega=0.0, center=0.0, phase=0.0):
    t = grid.tau
    return Envelope(grid, amp / np.cosh(amp * (t - center)) * np.exp(-1j * omega * t + 1j * phase))


def random_field(grid, seed=0):
    rng = np.random.default_rng(seed)
    return Envelope(grid, rng.standard_normal(grid.n_points) + 1j * rng.standard_normal(grid.n_points))


def pytest_terminal_summary(terminalreporter):
    from _acceptance_registry import RESULTS, summary_lines
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in summary_lines():
        terminalreporter.write_line(line)
