import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from hosynth import hand_model as hm  # noqa: E402
from hosynth.mesh import box, cylinder, icosphere  # noqa: E402

# (criterion, line) pairs recorded by the acceptance suite, echoed in the summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def sphere4():
    return icosphere(0.04, 3, "sphere4")


@pytest.fixture(scope="session")
def box643():
    return box((0.06, 0.04, 0.03), 6, "box643")


@pytest.fixture(scope="session")
def cyl():
    return cylinder(0.025, 0.12, object_id="cyl")


@pytest.fixture(scope="session")
def skeleton():
    return hm.build_skeleton()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
