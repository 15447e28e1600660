import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ergonash.catalog import LagrangianSpec
from ergonash.grids import TorusGrid, VelocityGrid

settings.register_profile(
    "ci", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def xgrid():
    return TorusGrid(1, 64)


@pytest.fixture(scope="session")
def vgrid():
    return VelocityGrid(3.0, 33)


@pytest.fixture(scope="session")
def free():
    return LagrangianSpec()


@pytest.fixture(scope="session")
def pendulum():
    return LagrangianSpec(amplitude=1.0)


def pendulum_W(grid, a=1.0, phase=0.0):
    x = grid.nodes[:, 0]
    return a * (1.0 - np.cos(2 * np.pi * (x - phase)))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
