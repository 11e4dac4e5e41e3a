from __future__ import annotations

import math
import sys

import pytest
from hypothesis import HealthCheck, settings

from omcavity.omresponse import CavityParams, MechMode

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

TWO_PI = 2 * math.pi

# device values used throughout: kappa 481 kHz with 96/330 kHz port rates,
# drum at 5.23 MHz, 250 Hz linewidth, g0 8 Hz
KAPPA_HZ = 481e3
KAPPA_IN_HZ = 96e3
KAPPA_OUT_HZ = 330e3


@pytest.fixture
def cavity() -> CavityParams:
    return CavityParams(TWO_PI * 6.31e9, TWO_PI * (KAPPA_HZ - KAPPA_IN_HZ - KAPPA_OUT_HZ),
                        TWO_PI * KAPPA_IN_HZ, TWO_PI * KAPPA_OUT_HZ, 0.5)


@pytest.fixture
def drum() -> MechMode:
    return MechMode(TWO_PI * 5.23e6, TWO_PI * 250.0, TWO_PI * 8.0)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
