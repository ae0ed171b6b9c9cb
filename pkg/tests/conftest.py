import numpy as np
import pytest

from refina import Graph, NoiseSpec, noisy_permuted_copy, random_graph


def k3():
    return Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


def path(n):
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def star(leaves):
    return Graph.from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def one_hot(pi, n2):
    m = np.zeros((len(pi), n2))
    m[np.arange(len(pi)), pi] = 1.0
    return m


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def noisy_pair():
    """Random graph, its 5%-noisy permuted copy and the true mapping."""
    g1 = random_graph(120, 6, seed=7)
    g2, truth = noisy_permuted_copy(g1, NoiseSpec("remove_edges", 0.05, 8), perm_seed=9)
    return g1, g2, truth
