import numpy as np
import pytest

from sigmort._accel import BACKEND_ENV
from sigmort.decomposition import fit_huts
from sigmort.smoothing import smooth_surface
from sigmort.synthetic import gaussian_world


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running simulation test")
    config.addinivalue_line("markers", "acceptance: top-level acceptance criterion")


@pytest.fixture(params=["numba", "numpy"])
def backend(request, monkeypatch):
    """Run a test once per kernel backend."""
    monkeypatch.setenv(BACKEND_ENV, request.param)
    return request.param


@pytest.fixture(scope="session")
def world():
    return gaussian_world(q=30, n=50, seed=11)


@pytest.fixture(scope="session")
def smoothed(world):
    return smooth_surface(world.surface)


@pytest.fixture(scope="session")
def huts(smoothed):
    return fit_huts(smoothed, m=2, K=6)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def acceptance_verdict(number: int, title: str, ok: bool, detail: str = ""):
    """Print and remember one PASS/FAIL line for an acceptance criterion."""
    line = f"ACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'} {title}" + (f": {detail}" if detail else "")
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
