import pytest

from ccx.boundary import build_boundary
from ccx.convexity import derive_constants
from ccx.spaces import binary_tree, euclidean_disc

# one line per acceptance criterion, filled in by test_acceptance
ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def nominal():
    return derive_constants(1.0, 0.0, 1.0, 0.0)


@pytest.fixture(scope="session")
def tree6(nominal):
    X, L = binary_tree(6)
    return X, L, build_boundary(X, L, nominal, 6)


@pytest.fixture(scope="session")
def tree4(nominal):
    X, L = binary_tree(4)
    return X, L, build_boundary(X, L, nominal, 4)


@pytest.fixture(scope="session")
def disc32(nominal):
    X, L = euclidean_disc(32)
    return X, L, build_boundary(X, L, nominal)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
