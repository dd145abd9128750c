import sys

import numpy as np
import pytest

from extpose.rotating_earth import EarthModel
from extpose.simulation import TrajectorySpec, synthesize_imu


@pytest.fixture(scope="session")
def car_10hz():
    """Flat-Earth car trajectory sampled at 10 Hz."""
    return synthesize_imu(TrajectorySpec("waypoint_spline"), EarthModel.flat(), dt=0.1)


@pytest.fixture(scope="session")
def car_100hz():
    return synthesize_imu(TrajectorySpec("waypoint_spline"), EarthModel.flat(), dt=0.01)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, line = results[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {line}")
