import numpy as np
import pytest

from bbmlab import _accel
from bbmlab.engine import Population
from bbmlab.stochastic import RandomStream

ACCEPTANCE_LINES = []


@pytest.fixture(params=["numba", "numpy"])
def backend(request, monkeypatch):
    """Run the test once per kernel backend."""
    if request.param == "numba" and not _accel.HAVE_NUMBA:
        pytest.skip("numba not installed")
    monkeypatch.setenv(_accel.ENV_FLAG, "1" if request.param == "numba" else "0")
    return request.param


def many_roots(n, stream, rate=1.0, step=0.1):
    """``n`` independent root particles at the origin in one population.

    Lineages never interact without pruning, so this is ``n`` replicas of
    the one-particle start in a single engine call.
    """
    g = stream.generator
    clocks = g.standard_exponential(n) / rate if rate > 0 else np.full(n, np.inf)
    return Population(0.0, np.zeros(n), clocks, np.arange(n, dtype=np.int64),
                      np.full(n, -1, dtype=np.int64), np.zeros(n), step, stream.seed, next_id=n,
                      anc=np.arange(n, dtype=np.int64))


@pytest.fixture
def stream():
    return RandomStream(20240601)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
