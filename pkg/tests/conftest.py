import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "padl", deadline=None, max_examples=int(os.environ.get("PADL_HYPOTHESIS_EXAMPLES", "25")),
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("padl")

TWO_PI = 2 * np.pi


@pytest.fixture(scope="session")
def fitted():
    from padl.presets import fitted_delay_line

    return fitted_delay_line()


@pytest.fixture(scope="session")
def comb():
    from padl.presets import ideal_comb

    return ideal_comb()


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
