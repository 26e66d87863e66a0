"""Directed influence networks, the bias node and seed-conditioned chains.

An edge `src -> dst` with weight `w` means that `src` follows `dst`: the
state of `dst` influences the next choice of `src` in proportion to `w`. The
augmented network adds one bias node, index `n_raw`, that every original node
follows with weight `beta_i`. Fixing a seed set turns the augmented network
into an absorbing Markov chain whose boundary is the seeds plus the bias
node.

"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from hc_influence.exceptions import (
    DuplicateEdge,
    EdgeListParseError,
    InvalidEdgeWeight,
    InvalidNetworkParameter,
    InvalidNodeIndex,
    InvalidSeedSet,
    MaskedEntryError,
    SelfLoopError,
    UnknownMethodError,
)

logger = logging.getLogger(__name__)

DEFAULT_BETA = 0.1
STOCHASTIC_TOLERANCE = 1e-12

EXPLICIT = 'explicit'
UNIFORM_RANDOM = 'uniform_random'
INVERSE_OUT_DEGREE = 'inverse_out_degree'
WEIGHTED_CASCADE = 'weighted_cascade'
WEIGHTING_SCHEMES = (EXPLICIT, UNIFORM_RANDOM, INVERSE_OUT_DEGREE, WEIGHTED_CASCADE)

NODE_COUNT_DIRECTIVE = '# nodes='


def _read_only(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


def _per_node(values, n_nodes: int, name: str) -> np.ndarray:
    """Broadcast a scalar or sequence to a float vector of length n_nodes."""
    array = np.array(
        np.broadcast_to(np.asarray(values, dtype=np.float64), (n_nodes,))
    )
    if not np.all(np.isfinite(array)):
        raise InvalidNetworkParameter(name, 'values must be finite.')
    return array


@dataclass(frozen=True, eq=False)
class Network:
    """A directed weighted follower graph with per-node HC parameters.

    `beta` is the bias strength of each node. `alpha`, `gamma`, `media_m`
    and `reluctance_r` describe the general HC variant, in which a node is
    pulled towards the media value with strength `alpha_i` and towards the
    reluctance value with strength `gamma_i`. By default `alpha = beta` and
    `gamma = 0`, which is the plain HC model.

    """

    n_raw: int
    sources: np.ndarray
    destinations: np.ndarray
    weights: np.ndarray
    beta: np.ndarray | float = DEFAULT_BETA
    media_m: float = 1.0
    reluctance_r: float = 0.0
    alpha: np.ndarray | None = None
    gamma: np.ndarray | None = None
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        """Coerce array fields, fill defaults and validate invariants."""
        n_raw = int(self.n_raw)
        sources = np.asarray(self.sources, dtype=np.int64).reshape(-1)
        destinations = np.asarray(self.destinations, dtype=np.int64).reshape(-1)
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)

        if not len(sources) == len(destinations) == len(weights):
            raise InvalidNetworkParameter(
                'edges', 'sources, destinations and weights differ in length.'
            )

        beta = _per_node(self.beta, n_raw, 'beta')
        alpha = beta.copy() if self.alpha is None else _per_node(
            self.alpha, n_raw, 'alpha'
        )
        gamma = np.zeros(n_raw) if self.gamma is None else _per_node(
            self.gamma, n_raw, 'gamma'
        )
        labels = (
            tuple(str(node) for node in range(n_raw))
            if self.labels is None
            else tuple(str(label) for label in self.labels)
        )

        object.__setattr__(self, 'n_raw', n_raw)
        object.__setattr__(self, 'sources', _read_only(sources))
        object.__setattr__(self, 'destinations', _read_only(destinations))
        object.__setattr__(self, 'weights', _read_only(weights))
        object.__setattr__(self, 'beta', _read_only(beta))
        object.__setattr__(self, 'alpha', _read_only(alpha))
        object.__setattr__(self, 'gamma', _read_only(gamma))
        object.__setattr__(self, 'media_m', float(self.media_m))
        object.__setattr__(self, 'reluctance_r', float(self.reluctance_r))
        object.__setattr__(self, 'labels', labels)
        self.validate()

    def validate(self) -> None:
        """Check the structural and parameter invariants of the network."""
        if self.n_raw < 1:
            raise InvalidNetworkParameter('n_raw', 'a network needs a node.')
        if len(self.labels) != self.n_raw:
            raise InvalidNetworkParameter('labels', 'one label per node required.')

        for nodes in (self.sources, self.destinations):
            out_of_range = (nodes < 0) | (nodes >= self.n_raw)
            if np.any(out_of_range):
                raise InvalidNodeIndex(int(nodes[out_of_range][0]), self.n_raw)

        loops = self.sources == self.destinations
        if np.any(loops):
            raise SelfLoopError(int(self.sources[loops][0]))

        bad_weights = ~np.isfinite(self.weights) | (self.weights < 0)
        if np.any(bad_weights):
            position = int(np.flatnonzero(bad_weights)[0])
            raise InvalidEdgeWeight(
                int(self.sources[position]),
                int(self.destinations[position]),
                self.weights[position],
            )

        keys = self.sources * self.n_raw + self.destinations
        unique_keys, counts = np.unique(keys, return_counts=True)
        if np.any(counts > 1):
            repeated = int(unique_keys[counts > 1][0])
            raise DuplicateEdge(repeated // self.n_raw, repeated % self.n_raw)

        if np.any((self.beta < 0) | (self.beta >= 1)):
            raise InvalidNetworkParameter('beta', 'values must lie in [0, 1).')
        if np.any(self.alpha < 0) or np.any(self.gamma < 0):
            raise InvalidNetworkParameter('alpha/gamma', 'values must be >= 0.')
        if np.any(self.alpha + self.gamma > 1 + STOCHASTIC_TOLERANCE):
            raise InvalidNetworkParameter('alpha/gamma', 'alpha + gamma must be <= 1.')
        for name, value in (
            ('media_m', self.media_m),
            ('reluctance_r', self.reluctance_r),
        ):
            if not 0 <= value <= 1:
                raise InvalidNetworkParameter(name, 'value must lie in [0, 1].')

    @classmethod
    def from_edges(
        cls,
        n_raw: int,
        edges: Iterable[tuple[int, int, float]],
        beta: np.ndarray | float = DEFAULT_BETA,
        **kwargs,
    ) -> Network:
        """Build a network from `(src, dst, weight)` triples."""
        edge_array = np.array(list(edges), dtype=np.float64).reshape(-1, 3)
        return cls(
            n_raw,
            edge_array[:, 0].astype(np.int64),
            edge_array[:, 1].astype(np.int64),
            edge_array[:, 2],
            beta=beta,
            **kwargs,
        )

    @property
    def n_edges(self) -> int:
        """Number of directed edges."""
        return len(self.sources)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        """Edges as a list of `(src, dst, weight)` tuples."""
        return [
            (int(src), int(dst), float(weight))
            for src, dst, weight in zip(self.sources, self.destinations, self.weights)
        ]

    def adjacency(self) -> sp.csr_array:
        """Raw weighted adjacency matrix, rows are followers."""
        return sp.csr_array(
            (self.weights, (self.sources, self.destinations)),
            shape=(self.n_raw, self.n_raw),
        )

    def out_degree(self) -> np.ndarray:
        """Number of nodes each node follows."""
        return np.bincount(self.sources, minlength=self.n_raw)

    def in_degree(self) -> np.ndarray:
        """Number of followers of each node."""
        return np.bincount(self.destinations, minlength=self.n_raw)

    def normalized_weights(self) -> sp.csr_array:
        """Row-normalized trust weights; rows without out-weight stay zero."""
        row_sums = np.bincount(self.sources, weights=self.weights, minlength=self.n_raw)
        scale = np.divide(
            1.0, row_sums, out=np.zeros(self.n_raw), where=row_sums > 0
        )
        normalized = sp.csr_array(
            (self.weights * scale[self.sources], (self.sources, self.destinations)),
            shape=(self.n_raw, self.n_raw),
        )
        normalized.eliminate_zeros()
        return normalized

    def with_beta(self, beta: np.ndarray | float) -> Network:
        """Return a copy with new bias strengths (alpha follows beta)."""
        return replace(self, beta=beta, alpha=None)


def assign_weights(
    sources: np.ndarray,
    destinations: np.ndarray,
    n_raw: int,
    weighting: str,
    rng: np.random.Generator | None = None,
    explicit_weights: np.ndarray | None = None,
) -> np.ndarray:
    """Compute edge weights according to a named weighting scheme."""
    if weighting == EXPLICIT:
        return np.asarray(explicit_weights, dtype=np.float64)
    if weighting == UNIFORM_RANDOM:
        rng = np.random.default_rng() if rng is None else rng
        draws = rng.uniform(0.0, 1.0, size=len(sources))
        totals = np.bincount(sources, weights=draws, minlength=n_raw)
        return draws / totals[sources]
    if weighting == INVERSE_OUT_DEGREE:
        return 1.0 / np.bincount(sources, minlength=n_raw)[sources]
    if weighting == WEIGHTED_CASCADE:
        return 1.0 / np.bincount(destinations, minlength=n_raw)[destinations]

    raise UnknownMethodError('weighting scheme', weighting, WEIGHTING_SCHEMES)


def _parse_node_count(file_path, line_number: int, text: str) -> int:
    try:
        count = int(text)
    except ValueError as error:
        raise EdgeListParseError(
            file_path, line_number, f'node count "{text}" is not an integer'
        ) from error
    if count < 0:
        raise EdgeListParseError(file_path, line_number, 'node count must be >= 0')
    return count


def load_edge_list(
    file_path: str | Path,
    weighting: str = EXPLICIT,
    seed: int | None = None,
    beta: np.ndarray | float = DEFAULT_BETA,
) -> Network:
    """Read a `src dst [weight]` edge list into a Network.

    Lines are tab- or space-separated and `#` lines are comments. When every
    label is a nonnegative integer the labels are used as node indices
    directly, otherwise labels are assigned dense indices in order of first
    appearance and kept in `Network.labels`. A `# nodes=N` comment, as
    written by `write_edge_list`, preserves trailing isolated nodes.

    """
    if weighting not in WEIGHTING_SCHEMES:
        raise UnknownMethodError('weighting scheme', weighting, WEIGHTING_SCHEMES)

    raw_edges = []
    declared_nodes = 0
    seen_pairs = set()

    with open(file_path, encoding='utf-8') as file_handler:
        for line_number, line in enumerate(file_handler, start=1):
            stripped = line.strip()
            if stripped.startswith(NODE_COUNT_DIRECTIVE):
                declared_nodes = _parse_node_count(
                    file_path, line_number, stripped[len(NODE_COUNT_DIRECTIVE) :]
                )
                continue
            if not stripped or stripped.startswith('#'):
                continue

            columns = stripped.split()
            if len(columns) not in (2, 3):
                raise EdgeListParseError(
                    file_path,
                    line_number,
                    f'expected 2 or 3 columns, got {len(columns)}',
                )
            if weighting == EXPLICIT and len(columns) != 3:
                raise EdgeListParseError(
                    file_path,
                    line_number,
                    'explicit weighting requires a weight column',
                )

            source, destination = columns[0], columns[1]
            if source == destination:
                raise EdgeListParseError(
                    file_path, line_number, f'self-loop on node "{source}"'
                )

            weight = 1.0
            if len(columns) == 3:
                try:
                    weight = float(columns[2])
                except ValueError as exception:
                    raise EdgeListParseError(
                        file_path, line_number, f'invalid weight "{columns[2]}"'
                    ) from exception
                if weight < 0 or not np.isfinite(weight):
                    raise InvalidEdgeWeight(source, destination, weight)

            if (source, destination) in seen_pairs:
                raise DuplicateEdge(source, destination)
            seen_pairs.add((source, destination))
            raw_edges.append((source, destination, weight))

    index_of, labels = _index_labels(raw_edges, declared_nodes)
    sources = np.array([index_of[src] for src, _, _ in raw_edges], dtype=np.int64)
    destinations = np.array([index_of[dst] for _, dst, _ in raw_edges], dtype=np.int64)
    weights = assign_weights(
        sources,
        destinations,
        len(labels),
        weighting,
        rng=np.random.default_rng(seed),
        explicit_weights=np.array([weight for _, _, weight in raw_edges]),
    )

    logger.info(
        'Loaded %d nodes and %d edges from %s', len(labels), len(raw_edges), file_path
    )
    return Network(
        len(labels), sources, destinations, weights, beta=beta, labels=labels
    )


def _index_labels(raw_edges: list, declared_nodes: int) -> tuple[dict, list[str]]:
    """Map node labels to dense indices."""
    ordered_labels = list(
        dict.fromkeys(label for src, dst, _ in raw_edges for label in (src, dst))
    )

    if all(label.isdigit() for label in ordered_labels):
        n_nodes = max([int(label) + 1 for label in ordered_labels] + [declared_nodes])
        return {label: int(label) for label in ordered_labels}, [
            str(node) for node in range(n_nodes)
        ]

    return {label: index for index, label in enumerate(ordered_labels)}, ordered_labels


def write_edge_list(network: Network, file_path: str | Path) -> None:
    """Write the network as an explicit-weight edge list.

    Weights are written with `repr`, which round-trips doubles exactly.

    """
    with open(file_path, 'w', encoding='utf-8', newline='\n') as file_handler:
        file_handler.write(f'{NODE_COUNT_DIRECTIVE}{network.n_raw}\n')
        for source, destination, weight in network.edges:
            file_handler.write(f'{source}\t{destination}\t{weight!r}\n')


def write_label_table(network: Network, file_path: str | Path) -> None:
    """Write the `index label` sidecar table."""
    with open(file_path, 'w', encoding='utf-8', newline='\n') as file_handler:
        for index, label in enumerate(network.labels):
            file_handler.write(f'{index}\t{label}\n')


@dataclass(frozen=True, eq=False)
class AugmentedNetwork:
    """A network plus its bias node, as a row-stochastic transition matrix.

    `transition` is `n x n` with `n = n_raw + 1`. The bias row is an identity
    row: the bias node is always boundary and follows nobody.

    """

    network: Network
    transition: sp.csr_array
    bias_value: float = 0.0

    @property
    def n(self) -> int:
        """Total number of nodes including the bias node."""
        return self.network.n_raw + 1

    @property
    def n_raw(self) -> int:
        """Number of original nodes."""
        return self.network.n_raw

    @property
    def bias_index(self) -> int:
        """Index of the bias node."""
        return self.network.n_raw

    @property
    def bias_weights(self) -> np.ndarray:
        """Weight each original node places on the bias node."""
        return self.transition[:, [self.bias_index]].toarray().ravel()[: self.n_raw]

    @property
    def labels(self) -> tuple[str, ...]:
        """Labels of the original nodes."""
        return self.network.labels

    def social_block(self) -> sp.csr_array:
        """Transition weights among original nodes only."""
        return self.transition[: self.n_raw, :][:, : self.n_raw].tocsr()


def augment_with_bias(network: Network, b: float = 0.0) -> AugmentedNetwork:
    """Attach the bias node and normalize every row to sum to one.

    Trust weights are normalized per node, scaled by `1 - beta_i`, and the
    bias edge receives `beta_i`. A node that follows nobody sends all of its
    weight to the bias node.

    """
    if not 0 <= b <= 1:
        raise InvalidNetworkParameter('b', 'bias value must lie in [0, 1].')

    n_raw = network.n_raw
    bias_index = n_raw
    normalized = network.normalized_weights().tocoo()
    dangling = np.bincount(normalized.row, minlength=n_raw) == 0
    beta = np.asarray(network.beta)
    bias_weights = np.where(dangling, 1.0, beta)
    with_bias = np.flatnonzero(bias_weights > 0)

    rows = np.concatenate([normalized.row, with_bias, [bias_index]])
    columns = np.concatenate(
        [normalized.col, np.full(len(with_bias), bias_index), [bias_index]]
    )
    values = np.concatenate(
        [
            (1.0 - beta[normalized.row]) * normalized.data,
            bias_weights[with_bias],
            [1.0],
        ]
    )
    transition = sp.csr_array((values, (rows, columns)), shape=(n_raw + 1, n_raw + 1))
    transition.sort_indices()

    if np.any(dangling):
        logger.debug('%d dangling nodes attached to the bias node', int(dangling.sum()))

    return AugmentedNetwork(network, transition, float(b))


@dataclass(frozen=True)
class SeedSet:
    """An ordered set of distinct seed nodes with an optional budget K."""

    members: tuple[int, ...] = ()
    budget: int | None = None

    def __post_init__(self):
        """Normalize members to a tuple of ints and check distinctness."""
        members = tuple(int(node) for node in self.members)
        object.__setattr__(self, 'members', members)

        if len(set(members)) != len(members):
            raise InvalidSeedSet(f'members {members} are not distinct.')
        if self.budget is not None and len(members) > self.budget:
            raise InvalidSeedSet(f'{len(members)} seeds exceed budget K={self.budget}.')

    @classmethod
    def of(cls, *nodes: int) -> SeedSet:
        """Create a seed set from positional node indices."""
        return cls(tuple(nodes))

    def __len__(self) -> int:
        """Number of seeds."""
        return len(self.members)

    def __iter__(self):
        """Iterate over seeds in selection order."""
        return iter(self.members)

    def __contains__(self, node) -> bool:
        """Whether a node is a seed."""
        return int(node) in self.members

    def add(self, node: int) -> SeedSet:
        """Return a new seed set with `node` appended."""
        return SeedSet(self.members + (int(node),), self.budget)

    def validate(self, augmented: AugmentedNetwork) -> None:
        """Check seeds against an augmented network."""
        for node in self.members:
            if node == augmented.bias_index:
                raise InvalidSeedSet('the bias node cannot be a seed.')
            if not 0 <= node < augmented.n_raw:
                raise InvalidNodeIndex(node, augmented.n_raw)


def as_seed_set(seeds: SeedSet | Iterable[int] | None) -> SeedSet:
    """Accept a SeedSet or any iterable of node indices."""
    if seeds is None:
        return SeedSet()
    if isinstance(seeds, SeedSet):
        return seeds
    return SeedSet(tuple(seeds))


@dataclass(frozen=True, eq=False)
class TransitionSystem:
    """The absorbing chain induced by a seed set.

    Rows of `P` at boundary nodes are identity rows. `R` and `B_block` are
    the interior-to-interior and interior-to-boundary blocks; interior nodes
    are ordered by ascending global index and boundary columns follow the
    seed order with the bias node last.

    """

    P: sp.csr_array
    seeds: SeedSet
    boundary: np.ndarray
    interior: np.ndarray
    R: sp.csr_array
    B_block: sp.csr_array
    bias_index: int
    _positions: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        """Build the global-to-interior position map."""
        positions = np.full(self.P.shape[0], -1, dtype=np.int64)
        positions[self.interior] = np.arange(len(self.interior))
        object.__setattr__(self, '_positions', _read_only(positions))

    @property
    def n(self) -> int:
        """Total number of nodes including the bias node."""
        return self.P.shape[0]

    @property
    def n_raw(self) -> int:
        """Number of original nodes."""
        return self.bias_index

    @property
    def n_interior(self) -> int:
        """Number of interior nodes."""
        return len(self.interior)

    @property
    def interior_index_map(self) -> np.ndarray:
        """Interior position of every global node, -1 for boundary nodes."""
        return self._positions

    def interior_position(self, node: int) -> int:
        """Position of a global node within the interior blocks."""
        position = int(self._positions[node])
        if position < 0:
            raise MaskedEntryError(node)
        return position

    def laplacian(self) -> sp.csr_array:
        """The graph Laplacian `L = I - P`."""
        return (sp.identity(self.n, format='csr') - self.P).tocsr()


def max_row_sum_deviation(matrix: sp.sparray) -> float:
    """Largest absolute deviation of a row sum from one."""
    if matrix.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(np.asarray(matrix.sum(axis=1)).ravel() - 1.0)))


def build_transition_system(
    augmented: AugmentedNetwork, seeds: SeedSet | Iterable[int] | None = None
) -> TransitionSystem:
    """Replace seed rows with identity rows and split P into R and B."""
    seeds = as_seed_set(seeds)
    seeds.validate(augmented)

    seed_nodes = np.array(seeds.members, dtype=np.int64)
    keep_rows = np.ones(augmented.n)
    keep_rows[seed_nodes] = 0.0
    seed_rows = sp.csr_array(
        (np.ones(len(seed_nodes)), (seed_nodes, seed_nodes)),
        shape=(augmented.n, augmented.n),
    )
    transition = (sp.diags_array(keep_rows) @ augmented.transition + seed_rows).tocsr()
    transition.eliminate_zeros()
    transition.sort_indices()

    boundary = np.append(seed_nodes, augmented.bias_index).astype(np.int64)
    interior = np.setdiff1d(np.arange(augmented.n, dtype=np.int64), boundary)
    interior_rows = transition[interior, :]

    return TransitionSystem(
        P=transition,
        seeds=seeds,
        boundary=boundary,
        interior=interior,
        R=interior_rows[:, interior].tocsr(),
        B_block=interior_rows[:, boundary].tocsr(),
        bias_index=augmented.bias_index,
    )
