import warnings

import numpy as np
import pytest

from htype_spectral.gft import SpaceGrid, TruncationWarning, forward, lambda_quadrature
from htype_spectral.evolve import initial_data, schwartz_suite
from htype_spectral.group_core import heisenberg


@pytest.fixture(scope="session")
def heis():
    return heisenberg(1)


@pytest.fixture(scope="session")
def quad48():
    return lambda_quadrature(1, 0.05, 8.0, 48, 6)


@pytest.fixture(scope="session")
def grid65():
    return SpaceGrid(1, 1, 8.0, 65, 14.0, 77)


@pytest.fixture(scope="session")
def suite_fields(grid65):
    return schwartz_suite(grid65)


@pytest.fixture(scope="session")
def suite_coeffs(suite_fields, heis, quad48):
    names = list(suite_fields)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        coeffs = forward([suite_fields[n] for n in names], heis, quad48, 24)
    return dict(zip(names, coeffs))


@pytest.fixture(scope="session")
def gaussian_field(grid65, heis, quad48):
    return initial_data("gaussian", grid65, heis, quad48, 20)


@pytest.fixture(scope="session")
def gaussian_coeffs(gaussian_field, heis, quad48):
    return forward(gaussian_field, heis, quad48, 20)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash[ACCEPTANCE_LINES]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
