import numpy as np
import pytest

from ggdquant import experiments as ex
from ggdquant import ggd


@pytest.fixture(scope="session")
def gauss_curve():
    return ex.theoretical_curve(2.0)


@pytest.fixture(scope="session")
def heavy_curve():
    return ex.theoretical_curve(0.25)


@pytest.fixture(scope="session")
def laplace_curve():
    return ex.theoretical_curve(1.0)


@pytest.fixture(scope="session")
def gauss_samples():
    return ggd.sample(ggd.GgdParams(2.0), 10**6, 101)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
