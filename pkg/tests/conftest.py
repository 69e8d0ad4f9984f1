import numpy as np
import pytest

from stochpert import CovarianceKernel, Grid, ProblemSpec

_RESULTS = pytest.StashKey()


def pytest_configure(config):
    config.stash[_RESULTS] = []


@pytest.fixture
def criterion(request):
    """Record ``(number, passed, detail)``; the lines are printed in the terminal summary."""
    store = request.config.stash[_RESULTS]

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        store.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_RESULTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid():
    return Grid.uniform(201, 0.5, 1e-3)


@pytest.fixture(scope="session")
def small_grid():
    return Grid.uniform(51, 0.1, 2e-3)


@pytest.fixture(scope="session")
def spec(grid):
    return ProblemSpec.from_functions(grid, lambda x: np.sin(np.pi * x))


@pytest.fixture(scope="session")
def small_spec(small_grid):
    return ProblemSpec.from_functions(small_grid, lambda x: np.sin(np.pi * x), lambda x, t: x * (1 - x))


@pytest.fixture(scope="session")
def se_kernel():
    return CovarianceKernel("squared_exponential", 0.1, 0.5)
