import numpy as np
import pytest

from shtk.dyadic import build_adjacent_systems, build_dyadic_system
from shtk.space import Space, generate


def uniform_grid(n, a=0.0, b=1.0):
    """Midpoint grid with equal masses summing to b - a."""
    return generate("grid1d", n, a=a, b=b)


def point_space(coords, masses=None, metric="euclidean", params=None):
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = coords[:, None]
    return Space(coords, masses, metric, params=params)


@pytest.fixture(scope="session")
def line64():
    return generate("line", 64)


@pytest.fixture(scope="session")
def line256():
    return generate("line", 256)


@pytest.fixture(scope="session")
def system64(line64):
    return build_dyadic_system(line64)


@pytest.fixture(scope="session")
def adjacent256(line256):
    return build_adjacent_systems(line256)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = []


def record(label, ok, detail):
    line = f"{label} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
