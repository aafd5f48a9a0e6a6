import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from graspcomplete.geometry.primitives import box, icosphere

settings.register_profile("ci", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def unit_sphere():
    return icosphere(1.0, 4)


@pytest.fixture(scope="session")
def small_sphere():
    return icosphere(0.03, 3)


@pytest.fixture(scope="session")
def unit_cube():
    return box(1.0, 1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
