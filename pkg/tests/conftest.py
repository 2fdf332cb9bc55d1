import itertools

import numpy as np
import pytest

from cochain.complex import build_complex

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def path_graph():
    return build_complex([(0, 1), (1, 2)])


@pytest.fixture
def hollow_triangle():
    return build_complex([(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def filled_triangle():
    return build_complex([(0, 1, 2)])


@pytest.fixture
def tetra_boundary():
    return build_complex([(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)])


@pytest.fixture
def two_edges():
    return build_complex([(0, 1), (2, 3)])


@pytest.fixture
def unit_square():
    return np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def random_complex(rng, n_vertices=7, n_top=5, max_dim=3, max_simplices=200):
    """Closure of a few random simplices, shrunk until it has at most max_simplices."""
    while True:
        tops = []
        for _ in range(n_top):
            k = int(rng.integers(1, max_dim + 2))
            tops.append(tuple(rng.choice(n_vertices, size=min(k, n_vertices), replace=False)))
        K = build_complex(tops)
        if len(K) <= max_simplices:
            return K


def closure_by_subsets(tops):
    """Brute-force closure: every nonempty subset of every top simplex."""
    out = set()
    for t in tops:
        t = sorted(t)
        for r in range(1, len(t) + 1):
            out.update(itertools.combinations(t, r))
    return out
