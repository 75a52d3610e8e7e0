import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def E(n, m, i, j):
    """Matrix unit with a one at (i, j) (zero-based)."""
    M = np.zeros((n, m))
    M[i, j] = 1.0
    return M


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[num])
