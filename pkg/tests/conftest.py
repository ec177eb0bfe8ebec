import numpy as np
import pytest

from mgst import kernels, network
from mgst.fixtures import toy_pairs

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def spec():
    return network.default_network(7)


@pytest.fixture(scope="session")
def toy():
    return toy_pairs(32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    with kernels.using_backend(request.param):
        yield request.param


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
