import numpy as np
import pytest

from qegm.randomness import SeededPrng


@pytest.fixture
def src():
    return SeededPrng(1234)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
