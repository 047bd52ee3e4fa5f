import functools
import os

import pytest
from hypothesis import HealthCheck, settings

from ebus_sim.demand import DemandParams, generate_day_demand
from ebus_sim.route import lahore_calendar, lahore_route

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("ci", parent=settings.get_profile("default"), derandomize=True)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@functools.lru_cache(maxsize=None)
def lahore_demand(seed: int):
    return generate_day_demand(lahore_route(), lahore_calendar(), DemandParams(), seed)


@pytest.fixture(scope="session")
def route():
    return lahore_route()


@pytest.fixture(scope="session")
def calendar():
    return lahore_calendar()


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
