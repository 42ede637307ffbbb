import math
import time

import numpy as np
import pytest

from viscodelay import MemoryKernel, Scenario, Schedule, build_operator, calibrate_decay, simulate
from viscodelay.config import parabola_modes

K_DEFAULT = 16


def wave_scenario(schedule=None, dt=1 / 512, horizon=40.0, K=K_DEFAULT, mu0=0.2, delta=1.0, **kw):
    """The shipped desk-scale wave scenario with an optional schedule."""
    return Scenario(
        build_operator("wave_1d", K, math.pi),
        MemoryKernel.exponential(mu0, delta),
        schedule if schedule is not None else Schedule.quiet(0.5),
        parabola_modes(K, math.pi),
        np.zeros(K),
        dt=dt,
        horizon=horizon,
        **kw,
    )


def small_scenario(schedule=None, K=3, dt=1 / 64, horizon=2.0, pre_history="constant_equal_to_initial", **kw):
    """Cheap scenario for structural tests: short memory, coarse step."""
    u0 = np.linspace(1.0, 0.2, K)
    u1 = np.linspace(0.3, -0.1, K)
    return Scenario(
        build_operator("wave_1d", K, math.pi),
        MemoryKernel.exponential(1.0, 4.0),
        schedule if schedule is not None else Schedule.quiet(0.5),
        u0,
        u1,
        pre_history=pre_history,
        dt=dt,
        horizon=horizon,
        **kw,
    )


@pytest.fixture(scope="session")
def quiet_timed():
    """b = 0 run of the default scenario and its wall time (shared: takes a few seconds)."""
    start = time.perf_counter()
    tr = simulate(wave_scenario())
    return tr, time.perf_counter() - start


@pytest.fixture(scope="session")
def quiet_run(quiet_timed):
    return quiet_timed[0]


@pytest.fixture(scope="session")
def calibrated(quiet_run):
    return calibrate_decay(quiet_run)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
