"""Synthetic benchmark networks and graph statistics."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import shortest_path

from hc_influence.exceptions import (
    CapacityExceededError,
    EmptyGraphError,
    InvalidNetworkParameter,
)
from hc_influence.graph import (
    DEFAULT_BETA,
    INVERSE_OUT_DEGREE,
    UNIFORM_RANDOM,
    Network,
    assign_weights,
)
from hc_influence.rng import make_generator_streams

logger = logging.getLogger(__name__)

KRONECKER_INITIATORS = {
    'random': ((0.5, 0.5), (0.5, 0.5)),
    'hierarchical': ((0.9, 0.1), (0.1, 0.9)),
    'core_periphery': ((0.9, 0.5), (0.5, 0.3)),
}

# 2**63 overflows int64 node indices.
MAX_INDEX_POWER = 62
# Sampling visits every ordered pair, so 2**(2 * power) Bernoulli draws.
MAX_SAMPLED_POWER = 20
PAIR_BLOCK = 1 << 22

DIAMETER_SOURCE_BLOCK = 256


@dataclass(frozen=True)
class KroneckerSpec:
    """Parameters of a stochastic Kronecker graph on `2**power` nodes."""

    initiator: tuple[tuple[float, float], tuple[float, float]]
    power: int
    rng_seed: int | None = None
    beta: float = DEFAULT_BETA

    def validate(self) -> None:
        """Check the initiator entries and the power."""
        initiator = np.asarray(self.initiator, dtype=np.float64)
        if initiator.shape != (2, 2):
            raise InvalidNetworkParameter('initiator', 'must be a 2x2 matrix.')
        if np.any(initiator < 0) or np.any(initiator > 1):
            raise InvalidNetworkParameter('initiator', 'entries must lie in [0, 1].')
        if self.power < 1:
            raise InvalidNetworkParameter('power', 'must be >= 1.')
        if self.power > MAX_INDEX_POWER:
            raise CapacityExceededError(
                f'2^{self.power} nodes overflow 64-bit node indices.'
            )
        if self.power > MAX_SAMPLED_POWER:
            raise CapacityExceededError(
                f'per-pair sampling of 2^{2 * self.power} pairs; use power '
                f'<= {MAX_SAMPLED_POWER}.'
            )


@dataclass(frozen=True)
class ForestFireSpec:
    """Parameters of a directed forest-fire growth process."""

    n_target: int
    p_forward: float = 0.35
    p_backward: float = 0.25
    rng_seed: int | None = None
    beta: float = DEFAULT_BETA

    def validate(self) -> None:
        """Check the node count and burning probabilities."""
        if self.n_target < 1:
            raise InvalidNetworkParameter('n_target', 'must be >= 1.')
        for name in ('p_forward', 'p_backward'):
            if not 0 <= getattr(self, name) < 1:
                raise InvalidNetworkParameter(name, 'must lie in [0, 1).')


def kronecker_edge_probabilities(
    initiator: np.ndarray, rows: np.ndarray, columns: np.ndarray, power: int
) -> np.ndarray:
    """Edge probabilities for a block of `rows` against `columns`."""
    probabilities = np.ones((len(rows), len(columns)))
    for level in range(power):
        row_bits = (rows >> level) & 1
        column_bits = (columns >> level) & 1
        probabilities *= initiator[row_bits[:, None], column_bits[None, :]]
    return probabilities


def generate_kronecker(spec: KroneckerSpec) -> Network:
    """Sample a stochastic Kronecker graph.

    Every ordered pair `(i, j)`, `i != j`, is an edge independently with
    probability `prod_l initiator[bit_l(i), bit_l(j)]`. Rows are sampled in
    blocks so memory stays bounded. Weights follow the uniform random scheme.

    """
    spec.validate()
    initiator = np.asarray(spec.initiator, dtype=np.float64)
    streams = make_generator_streams(spec.rng_seed)
    n_nodes = 1 << spec.power
    columns = np.arange(n_nodes, dtype=np.int64)
    rows_per_block = max(1, PAIR_BLOCK // n_nodes)

    sources, destinations = [], []
    for start in range(0, n_nodes, rows_per_block):
        rows = np.arange(start, min(start + rows_per_block, n_nodes), dtype=np.int64)
        probabilities = kronecker_edge_probabilities(
            initiator, rows, columns, spec.power
        )
        draws = streams.topology.random(probabilities.shape)
        hit_rows, hit_columns = np.nonzero(draws < probabilities)
        keep = rows[hit_rows] != hit_columns
        sources.append(rows[hit_rows][keep])
        destinations.append(hit_columns[keep])

    sources = np.concatenate(sources)
    destinations = np.concatenate(destinations)
    weights = assign_weights(
        sources, destinations, n_nodes, UNIFORM_RANDOM, rng=streams.weights
    )

    logger.info(
        'Generated Kronecker graph with %d nodes and %d edges', n_nodes, len(sources)
    )
    return Network(n_nodes, sources, destinations, weights, beta=spec.beta)


@dataclass
class _GrowingGraph:
    out_links: list[list[int]] = field(default_factory=list)
    in_links: list[list[int]] = field(default_factory=list)

    def add_node(self) -> int:
        self.out_links.append([])
        self.in_links.append([])
        return len(self.out_links) - 1

    def add_edge(self, source: int, destination: int) -> None:
        self.out_links[source].append(destination)
        self.in_links[destination].append(source)


def _burn(
    rng: np.random.Generator, candidates: list[int], visited: set[int], p_burn: float
) -> list[int]:
    """Pick a geometric number of unvisited candidates with mean p/(1-p)."""
    if p_burn <= 0:
        return []
    count = int(rng.geometric(1.0 - p_burn)) - 1
    unvisited = [node for node in candidates if node not in visited]
    if count <= 0 or not unvisited:
        return []
    picked = rng.choice(len(unvisited), size=min(count, len(unvisited)), replace=False)
    return [unvisited[index] for index in picked]


def generate_forest_fire(spec: ForestFireSpec) -> Network:
    """Grow a directed forest-fire graph.

    Each new node picks a uniform ambassador, then burns outward: from every
    burned node it follows a geometric number of out-links (mean
    `p_f / (1 - p_f)`) and of in-links (the same law with `p_b`),
    never revisiting a node. The new node links to everything burned.
    Weights are `1 / out-degree`.

    """
    spec.validate()
    streams = make_generator_streams(spec.rng_seed)
    rng = streams.topology

    graph = _GrowingGraph()
    graph.add_node()
    for _ in range(1, spec.n_target):
        ambassador = int(rng.integers(len(graph.out_links)))
        node = graph.add_node()

        visited = {node, ambassador}
        burned = [ambassador]
        queue = deque([ambassador])
        while queue:
            current = queue.popleft()
            forward = _burn(rng, graph.out_links[current], visited, spec.p_forward)
            visited.update(forward)
            backward = _burn(
                rng, graph.in_links[current], visited, spec.p_backward
            )
            visited.update(backward)
            for target in forward + backward:
                burned.append(target)
                queue.append(target)

        for target in burned:
            graph.add_edge(node, target)

    sources = np.array(
        [source for source, targets in enumerate(graph.out_links) for _ in targets],
        dtype=np.int64,
    )
    destinations = np.array(
        [t for targets in graph.out_links for t in targets], dtype=np.int64
    )
    weights = assign_weights(sources, destinations, spec.n_target, INVERSE_OUT_DEGREE)

    logger.info(
        'Generated forest-fire graph with %d nodes and %d edges',
        spec.n_target,
        len(sources),
    )
    return Network(spec.n_target, sources, destinations, weights, beta=spec.beta)


def estimate_effective_diameter(
    network: Network,
    sample_size: int = 1000,
    quantile: float = 0.9,
    rng_seed: int | None = 0,
) -> int:
    """Smallest hop count that covers `quantile` of reachable pairs.

    Hop distances are found by breadth-first search from up to `sample_size`
    random sources on the unweighted directed graph.

    """
    if not 0 < quantile <= 1:
        raise InvalidNetworkParameter('quantile', 'must lie in (0, 1].')
    if network.n_edges == 0:
        raise EmptyGraphError()

    adjacency = network.adjacency()
    rng = np.random.default_rng(rng_seed)
    n_sources = min(sample_size, network.n_raw)
    sources = np.sort(rng.choice(network.n_raw, size=n_sources, replace=False))

    counts = np.zeros(network.n_raw, dtype=np.int64)
    for start in range(0, n_sources, DIAMETER_SOURCE_BLOCK):
        batch = sources[start : start + DIAMETER_SOURCE_BLOCK]
        distances = shortest_path(
            adjacency, method='D', directed=True, unweighted=True, indices=batch
        )
        reachable = distances[np.isfinite(distances) & (distances > 0)]
        counts += np.bincount(reachable.astype(np.int64), minlength=network.n_raw)[
            : network.n_raw
        ]

    total = int(counts.sum())
    if total == 0:
        raise EmptyGraphError()
    cumulative = np.cumsum(counts)
    return int(np.searchsorted(cumulative, math.ceil(quantile * total)))
