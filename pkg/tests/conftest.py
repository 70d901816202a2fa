import numpy as np
import pytest

from wssl import graph

ACCEPTANCE_LINES = []


def random_basis(rng, n, m, k=None):
    """Spectral basis of a random clustered k-NN graph."""
    k = k or min(n - 1, 8)
    centers = rng.normal(size=(4, 137)) * 3
    X = centers[rng.integers(0, 4, n)] + rng.normal(size=(n, 137))
    g = graph.build_knn_graph(X, k)
    L = graph.normalized_laplacian(g)
    return g, L, graph.spectral_basis(L, m, method="dense")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
