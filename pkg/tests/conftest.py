import numpy as np
import pytest

from wsobolev.geometry import DomainSpec, build_grid_domain
from wsobolev.measure import WeightField


@pytest.fixture(scope="session")
def unit_interval():
    return build_grid_domain(DomainSpec.interval(), 1 / 1024)


@pytest.fixture(scope="session")
def cusp_grid():
    return build_grid_domain(DomainSpec.power_cusp(2), 1 / 64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def ones(domain):
    return WeightField.constant(domain)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.rstrip("ab")), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
