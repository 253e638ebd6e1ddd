import numpy as np
import pytest

from wignerlab.ensemble import Gaussian, Rademacher, sample_wigner


@pytest.fixture
def rademacher_sample():
    return sample_wigner(40, Rademacher(), seed=11)


@pytest.fixture
def gaussian_sample():
    return sample_wigner(30, Gaussian(), seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# acceptance outcomes, one line per criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
