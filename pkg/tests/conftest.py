import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import _report

settings.register_profile(
    "default", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not _report.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_report.RESULTS):
        terminalreporter.write_line(_report.RESULTS[number])
