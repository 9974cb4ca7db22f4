import numpy as np
import pytest

from diagc.graphdata import MultiViewGraph, SparseAdjacency


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_binary_adjacency(rng, n, p=0.3):
    A = np.triu((rng.random((n, n)) < p).astype(float), 1)
    return A + A.T


@pytest.fixture
def small_graph(rng):
    n = 10
    views = [SparseAdjacency(random_binary_adjacency(rng, n)) for _ in range(2)]
    return MultiViewGraph(rng.standard_normal((n, 5)), views, np.arange(n) % 2)
