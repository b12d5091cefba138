import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from eeqt.arrival import arrival_grid
from eeqt.detectors import DetectorSpec
from eeqt.relkin import Grid, InitialStateSpec, ModelParams, build_initial_state

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=15, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

PARAMS = ModelParams()


@pytest.fixture(scope="session")
def params():
    return PARAMS


@pytest.fixture(scope="session")
def small_grid():
    return Grid(-6.0, 6.0, 0.004)


@pytest.fixture(scope="session")
def packet_p(small_grid):
    """Positive-energy packet at p0 = 1 centred at the origin."""
    return build_initial_state(InitialStateSpec("P", 1.0, 0.0), PARAMS, small_grid)


@pytest.fixture(scope="session")
def packet_n(small_grid):
    return build_initial_state(InitialStateSpec("N", 1.0, 0.0), PARAMS, small_grid)


@pytest.fixture(scope="session")
def arrival_detector():
    return DetectorSpec(0.0, 0.01, 1e-5)


@pytest.fixture(scope="session")
def coarse_arrival_grid():
    return arrival_grid(1.0, 0.002)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def gauss(small_grid):
    """Mixed-energy packet with a Gaussian envelope; negligible at the walls."""
    psi = build_initial_state(InitialStateSpec("PN", 1.0, 0.0), PARAMS, small_grid)
    return psi.replace(psi.values / np.sqrt(psi.norm2()))


# one line per acceptance criterion, repeated after the test summary
CRITERIA = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[CRITERIA] = []


@pytest.fixture
def criterion(request):
    """report(number, title, ok, detail) prints and records one result line."""
    def report(number, title, ok, detail):
        line = f"criterion {number:>2} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        print(line)
        request.config.stash[CRITERIA].append(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
