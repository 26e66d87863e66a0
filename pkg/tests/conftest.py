"""Set up fixtures for unit tests."""

from os.path import join as path_join
from shutil import rmtree
from tempfile import mkdtemp

import numpy as np
from pytest import fixture

from hc_influence.graph import AugmentedNetwork, Network, augment_with_bias


@fixture(scope='function')
def temp_dir() -> str:
    """A temporary directory for test isolation."""
    temp_directory = mkdtemp()
    yield temp_directory
    rmtree(temp_directory)


@fixture(scope='function')
def two_node_network() -> Network:
    """Two nodes following each other with weight one, beta = 0.1.

    With the bias node absorbing, `R = [[0, 0.9], [0.9, 0]]` and the
    fundamental matrix is `[[1, 0.9], [0.9, 1]] / 0.19`.

    """
    return Network.from_edges(2, [(0, 1, 1.0), (1, 0, 1.0)], beta=0.1)


@fixture(scope='function')
def two_node_augmented(two_node_network) -> AugmentedNetwork:
    """The two-node network with bias value b = 0."""
    return augment_with_bias(two_node_network)


@fixture(scope='function')
def star_network() -> Network:
    """Three leaves following hub node 0, which follows nobody."""
    return Network.from_edges(
        4, [(1, 0, 1.0), (2, 0, 1.0), (3, 0, 1.0)], beta=0.1
    )


@fixture(scope='function')
def star_augmented(star_network) -> AugmentedNetwork:
    """The star network with bias value b = 0."""
    return augment_with_bias(star_network)


@fixture(scope='function')
def cycle_network() -> Network:
    """A directed 3-cycle 0 -> 1 -> 2 -> 0."""
    return Network.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)], beta=0.1)


def _random_network(n_nodes: int, edge_probability: float, seed: int) -> Network:
    rng = np.random.default_rng(seed)
    edges = [
        (source, destination, float(rng.uniform(0.1, 1.0)))
        for source in range(n_nodes)
        for destination in range(n_nodes)
        if source != destination and rng.random() < edge_probability
    ]
    return Network.from_edges(n_nodes, edges, beta=0.1)


@fixture(scope='function')
def random_network() -> Network:
    """A fixed random network on eight nodes with uniform edge weights."""
    return _random_network(8, 0.35, seed=7)


@fixture(scope='function')
def random_augmented(random_network) -> AugmentedNetwork:
    """The eight-node random network with bias value b = 0."""
    return augment_with_bias(random_network)


@fixture(scope='function')
def medium_augmented() -> AugmentedNetwork:
    """A fixed random network on 40 nodes with bias value b = 0."""
    return augment_with_bias(_random_network(40, 0.1, seed=11))


@fixture(scope='function')
def two_node_edge_list(temp_dir) -> str:
    """The two-node network as an explicit-weight edge-list file."""
    file_path = path_join(temp_dir, 'two_node.tsv')
    with open(file_path, 'w', encoding='utf-8') as file_handler:
        file_handler.write('0\t1\t1.0\n1\t0\t1.0\n')
    return file_path
