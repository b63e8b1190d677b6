import networkx as nx
import numpy as np
import pytest

from utils.topology import Topology, load_preset, make_topology


def random_connected_branches(num_buses, rng, extra_probability=0.3):
    '''
    A G(n, p) graph joined up by a random spanning path, so it is always
    connected.
    '''
    graph = nx.gnp_random_graph(num_buses, extra_probability, seed=int(rng.integers(2 ** 31)))
    nx.add_path(graph, rng.permutation(num_buses).tolist())
    return sorted((min(l, k) + 1, max(l, k) + 1) for l, k in graph.edges)


def random_topology(rng, max_buses=10, uniform_variance=False) -> Topology:
    num_buses = int(rng.integers(1, max_buses + 1))
    branches = random_connected_branches(num_buses, rng)
    variance = 0.001 if uniform_variance else rng.uniform(1e-4, 1e-1, num_buses)
    return make_topology(num_buses, branches, variance)


def star_topology(size, variance) -> Topology:
    '''Bus 1 linked to every other bus, so N_1 covers the whole network.'''
    return make_topology(size, [[1, k] for k in range(2, size + 1)], variance)


@pytest.fixture
def rng():
    return np.random.default_rng(16)


@pytest.fixture(scope='session')
def ieee14():
    return load_preset('ieee14')


@pytest.fixture
def path4():
    '''1 - 2 - 3 - 4 with two control areas {1, 2} and {3, 4}.'''
    return make_topology(4, [[1, 2], [2, 3], [3, 4]], 0.01, areas=[[1, 2], [3, 4]])


@pytest.fixture
def triangle():
    return make_topology(3, [[1, 2], [2, 3], [1, 3]], [0.01, 0.02, 0.04])


@pytest.fixture
def random_graphs():
    '''1000 random connected graphs with up to 10 buses.'''
    rng = np.random.default_rng(2016)
    return [random_topology(rng) for _ in range(1000)]
