import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from binarykin.collision import AngularKernel, QuadratureSpec
from binarykin.kinematics import MassPair
from binarykin.vgrid import VelocityGrid

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def masses78():
    return MassPair(7.0, 8.0)


@pytest.fixture(scope="session")
def kernel():
    return AngularKernel()


@pytest.fixture(scope="session")
def quad():
    return QuadratureSpec()


@pytest.fixture(scope="session")
def grid7(masses78):
    return VelocityGrid.for_masses(masses78.m_min, 7)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


# one PASS/FAIL line per acceptance criterion, printed after the run
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def report():
    def record(number: int, ok: bool, detail: str) -> None:
        ACCEPTANCE[number] = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        print(ACCEPTANCE[number])
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
