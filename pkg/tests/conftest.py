import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from pclbench.config import Bounds, SemanticsConfig  # noqa: E402
from pclbench.repro import fixture  # noqa: E402


@pytest.fixture(scope="session")
def cr():
    return fixture("cr")


@pytest.fixture
def typed():
    return SemanticsConfig()


@pytest.fixture
def small():
    return Bounds(1, 14, 4)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
