"""Closed-form infinite-horizon spread under the Heat Conduction model.

With the seeds and the bias node absorbing, the steady-state adoption
probability of every interior node is the probability that a random walk
started there is absorbed at a seed (plus `b` times the probability that it
is absorbed at the bias node). Everything here is computed from the
fundamental matrix `F = (I - R)^-1` of that chain, either exactly or through
the truncated series `I + R + ... + R^T`.

"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg

from hc_influence.exceptions import (
    EmptyInteriorError,
    InvalidNetworkParameter,
    InvalidSeedSet,
    MaskedEntryError,
    ShapeMismatchError,
    SingularSystemError,
    UnknownMethodError,
    UnsupportedBackendError,
)
from hc_influence.generators import estimate_effective_diameter
from hc_influence.graph import (
    AugmentedNetwork,
    SeedSet,
    TransitionSystem,
    as_seed_set,
    build_transition_system,
)

logger = logging.getLogger(__name__)

DENSE = 'dense_exact'
NEUMANN = 'neumann'
AUTO = 'auto'

DEFAULT_DENSE_THRESHOLD = 10_000
DEFAULT_DIAMETER_SAMPLE = 1_000
DEFAULT_DIAMETER_QUANTILE = 0.9
IDENTITY_TOLERANCE = 1e-9
SAMPLE_BLOCK_SIZE = 256
UPDATE_BLOCK_ROWS = 1024


@dataclass(frozen=True)
class Backend:
    """How fundamental-matrix quantities are computed.

    `truncation` is the Neumann series length T. `samples` selects stochastic
    estimation of the Neumann diagonal with that many Rademacher samples;
    `None` computes the truncated diagonal exactly.

    """

    kind: str = DENSE
    truncation: int | None = None
    samples: int | None = None

    def __post_init__(self):
        """Validate the backend description."""
        if self.kind not in (DENSE, NEUMANN):
            raise UnknownMethodError('backend', self.kind, (DENSE, NEUMANN))
        if self.kind == NEUMANN and self.truncation is not None and self.truncation < 0:
            raise InvalidNetworkParameter('truncation', 'T must be >= 0.')

    @classmethod
    def dense(cls) -> Backend:
        """The exact factorization backend."""
        return cls(DENSE)

    @classmethod
    def neumann(cls, truncation: int | None, samples: int | None = None) -> Backend:
        """The truncated Neumann series backend."""
        return cls(NEUMANN, truncation, samples)

    @classmethod
    def parse(cls, text: str) -> Backend | str:
        """Parse `dense`, `neumann`, `neumann:T` or `auto`."""
        name, _, truncation = text.strip().partition(':')
        if name == AUTO:
            return AUTO
        if name in ('dense', DENSE):
            return cls.dense()
        if name == NEUMANN:
            return cls.neumann(int(truncation) if truncation else None)
        raise UnknownMethodError('backend', text, ('auto', 'dense', 'neumann:T'))

    def __str__(self) -> str:
        """Short name used in traces and result tables."""
        if self.kind == DENSE:
            return 'dense'
        return f'neumann:{self.truncation}'


def resolve_backend(
    backend: Backend | str | None,
    augmented: AugmentedNetwork,
    dense_threshold: int = DEFAULT_DENSE_THRESHOLD,
    truncation: int | None = None,
    rng_seed: int | None = 0,
) -> Backend:
    """Turn `auto`, a backend name, or a partial Backend into a full Backend.

    `auto` selects the dense backend up to `dense_threshold` original nodes
    and the Neumann backend above it. A Neumann backend without a truncation
    length uses `truncation`, or else the estimated effective diameter.

    """
    if backend is None:
        backend = AUTO
    if isinstance(backend, str):
        backend = Backend.parse(backend)
    if backend == AUTO:
        backend = (
            Backend.dense()
            if augmented.n_raw <= dense_threshold
            else Backend.neumann(truncation)
        )

    if backend.kind == NEUMANN and backend.truncation is None:
        if truncation is None:
            truncation = effective_truncation(augmented, rng_seed=rng_seed)
        backend = Backend.neumann(truncation, backend.samples)

    logger.debug('Using %s backend for %d nodes', backend, augmented.n_raw)
    return backend


def effective_truncation(augmented: AugmentedNetwork, rng_seed: int | None = 0) -> int:
    """Neumann truncation length: the effective diameter of the network."""
    if augmented.network.n_edges == 0:
        return 0
    return estimate_effective_diameter(
        augmented.network,
        sample_size=DEFAULT_DIAMETER_SAMPLE,
        quantile=DEFAULT_DIAMETER_QUANTILE,
        rng_seed=rng_seed,
    )


@dataclass(frozen=True, eq=False)
class FundamentalMatrix:
    """Fundamental matrix `F = (I - R)^-1`, or its truncated series.

    Rows and columns are indexed by `universe`, the interior of the system F
    was first computed for. Nodes that later become seeds through rank-1
    updates stay in the universe but are masked out of `active`; reading
    them raises MaskedEntryError. The Neumann backend keeps only the
    diagonal and column sums, plus the transition system so single columns
    can be produced on demand.

    """

    backend: Backend
    seed_context: SeedSet
    universe: np.ndarray
    active: np.ndarray
    diagonal: np.ndarray
    column_sums: np.ndarray
    values: np.ndarray | None = None
    transition_system: TransitionSystem | None = None

    @property
    def interior(self) -> np.ndarray:
        """Global indices of the current interior nodes, ascending."""
        return self.universe[self.active]

    def position(self, node: int) -> int:
        """Position of an interior node in the universe."""
        position = int(np.searchsorted(self.universe, node))
        if (
            position >= len(self.universe)
            or self.universe[position] != node
            or not self.active[position]
        ):
            raise MaskedEntryError(node)
        return position

    def entry(self, row_node: int, column_node: int) -> float:
        """`F[i, j]` for two interior nodes (dense backend)."""
        self._require_dense('entry access')
        return float(self.values[self.position(row_node), self.position(column_node)])

    def dense(self) -> np.ndarray:
        """The active interior block of F (dense backend)."""
        self._require_dense('dense access')
        return self.values[np.ix_(self.active, self.active)]

    def column(self, node: int) -> np.ndarray:
        """Column `F[:, s]` aligned with `interior`."""
        position = self.position(node)
        if self.backend.kind == DENSE:
            return self.values[self.active, position]

        system = self.transition_system
        unit = np.zeros(system.n_interior)
        unit[system.interior_position(node)] = 1.0
        return neumann_apply(system.R, unit, self.backend.truncation)

    def normalized_column(self, node: int) -> np.ndarray:
        """Column of F divided by its diagonal entry, aligned with `interior`."""
        return self.column(node) / self.diagonal[self.position(node)]

    def normalized_column_sums(self) -> np.ndarray:
        """Column sums of F divided by the diagonal, aligned with `interior`."""
        return self.column_sums[self.active] / self.diagonal[self.active]

    def _require_dense(self, operation: str) -> None:
        if self.backend.kind != DENSE:
            raise UnsupportedBackendError(str(self.backend), operation)


@dataclass(frozen=True, eq=False)
class AbsorptionMatrix:
    """Absorption probabilities `Q = F B`, interior rows by boundary columns."""

    Q: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray

    def column(self, boundary_node: int) -> np.ndarray:
        """Absorption probabilities into one boundary node."""
        matches = np.flatnonzero(self.boundary == boundary_node)
        if not len(matches):
            raise MaskedEntryError(boundary_node)
        return self.Q[:, matches[0]]


@dataclass(frozen=True, eq=False)
class SteadyState:
    """Infinite-horizon adoption probabilities for a seed set."""

    v: np.ndarray
    seed_context: SeedSet
    sigma: float
    b: float = 0.0


def find_trapped_node(system: TransitionSystem) -> int | None:
    """Return the lowest interior node that cannot reach the boundary.

    Runs a breadth-first search backwards from every boundary node over the
    nonzero pattern of P.

    """
    pattern = system.P.copy()
    pattern.data = np.ones_like(pattern.data)

    reached = np.zeros(system.n, dtype=bool)
    reached[system.boundary] = True
    frontier = reached.copy()

    while frontier.any():
        predecessors = (pattern @ frontier.astype(np.float64)) > 0
        frontier = predecessors & ~reached
        reached |= frontier

    trapped = np.flatnonzero(~reached)
    return int(trapped[0]) if len(trapped) else None


def check_boundary_reachable(system: TransitionSystem) -> None:
    """Raise SingularSystemError if some interior node is trapped."""
    trapped = find_trapped_node(system)
    if trapped is not None:
        raise SingularSystemError(trapped)


def neumann_apply(R: sp.sparray, rhs: np.ndarray, truncation: int) -> np.ndarray:
    """Compute `(I + R + ... + R^T) rhs` with T sparse products."""
    term = np.array(rhs, dtype=np.float64)
    total = term.copy()
    for _ in range(truncation):
        term = R @ term
        total += term
    return total


def compute_fundamental_dense(system: TransitionSystem) -> FundamentalMatrix:
    """Solve `(I - R) X = I` by LU factorization."""
    if system.n_interior == 0:
        raise EmptyInteriorError()
    check_boundary_reachable(system)

    identity = np.eye(system.n_interior)
    factorization = scipy.linalg.lu_factor(
        identity - system.R.toarray(), check_finite=False
    )
    values = scipy.linalg.lu_solve(factorization, identity, check_finite=False)

    return FundamentalMatrix(
        backend=Backend.dense(),
        seed_context=system.seeds,
        universe=system.interior.copy(),
        active=np.ones(system.n_interior, dtype=bool),
        diagonal=np.diagonal(values).copy(),
        column_sums=values.sum(axis=0),
        values=values,
    )


def compute_fundamental_neumann(
    system: TransitionSystem,
    truncation: int,
    samples: int | None = None,
    rng_seed: int | None = 0,
) -> FundamentalMatrix:
    """Diagonal and column sums of `I + R + ... + R^T`.

    Column sums come from T products with `R^T` applied to the all-ones
    vector. The diagonal is accumulated exactly by pushing blocks of unit
    columns through R, or estimated from `samples` Rademacher vectors.

    """
    if truncation < 0:
        raise InvalidNetworkParameter('truncation', 'T must be >= 0.')

    R = system.R
    column_sums = neumann_apply(R.T.tocsr(), np.ones(system.n_interior), truncation)
    if samples is None:
        diagonal = _exact_neumann_diagonal(R, truncation)
    else:
        diagonal = _sampled_neumann_diagonal(R, truncation, samples, rng_seed)

    return FundamentalMatrix(
        backend=Backend.neumann(truncation, samples),
        seed_context=system.seeds,
        universe=system.interior.copy(),
        active=np.ones(system.n_interior, dtype=bool),
        diagonal=diagonal,
        column_sums=column_sums,
        transition_system=system,
    )


def _exact_neumann_diagonal(R: sp.sparray, truncation: int) -> np.ndarray:
    size = R.shape[0]
    diagonal = np.ones(size)

    for start in range(0, size, SAMPLE_BLOCK_SIZE):
        block = np.arange(start, min(start + SAMPLE_BLOCK_SIZE, size))
        offsets = np.arange(len(block))
        term = np.zeros((size, len(block)))
        term[block, offsets] = 1.0
        for _ in range(truncation):
            term = R @ term
            diagonal[block] += term[block, offsets]

    return diagonal


def _sampled_neumann_diagonal(
    R: sp.sparray, truncation: int, samples: int, rng_seed: int | None
) -> np.ndarray:
    rng = np.random.default_rng(rng_seed)
    signs = rng.choice([-1.0, 1.0], size=(R.shape[0], samples))
    series = neumann_apply(R, signs, truncation)
    # F_ii >= 1 for every interior node.
    return np.maximum((signs * series).mean(axis=1), 1.0)


def update_fundamental_rank1(
    fundamental: FundamentalMatrix, node: int, in_place: bool = False
) -> FundamentalMatrix:
    """Make `node` a seed: `F'_ij = F_ij - F_is F_sj / F_ss`.

    Row and column `node` are zeroed and masked. With `in_place=True` the
    values array of `fundamental` is reused, which leaves the input object
    stale.

    """
    if fundamental.backend.kind != DENSE:
        raise UnsupportedBackendError(str(fundamental.backend), 'rank-1 updates')

    position = fundamental.position(node)
    values = fundamental.values if in_place else fundamental.values.copy()
    pivot = values[position, position]
    if pivot <= 0:
        raise InvalidSeedSet(f'pivot F[{node}, {node}] = {pivot} is not positive.')

    column = values[:, position].copy()
    row = values[position, :] / pivot
    for start in range(0, len(values), UPDATE_BLOCK_ROWS):
        stop = start + UPDATE_BLOCK_ROWS
        values[start:stop] -= np.outer(column[start:stop], row)

    values[position, :] = 0.0
    values[:, position] = 0.0
    active = fundamental.active.copy()
    active[position] = False

    return FundamentalMatrix(
        backend=fundamental.backend,
        seed_context=fundamental.seed_context.add(node),
        universe=fundamental.universe,
        active=active,
        diagonal=np.diagonal(values).copy(),
        column_sums=values.sum(axis=0),
        values=values,
    )


def _check_same_interior(fundamental: FundamentalMatrix, system: TransitionSystem):
    if not np.array_equal(fundamental.interior, system.interior):
        raise ShapeMismatchError(
            f'F covers {len(fundamental.interior)} interior nodes, the '
            f'transition system has {system.n_interior}.'
        )


def absorption_from_fundamental(
    fundamental: FundamentalMatrix, system: TransitionSystem
) -> AbsorptionMatrix:
    """Absorption probabilities `Q = F B`."""
    _check_same_interior(fundamental, system)

    if fundamental.backend.kind == DENSE:
        absorption = np.asarray((system.B_block.T @ fundamental.dense().T).T)
    else:
        absorption = neumann_apply(
            system.R, system.B_block.toarray(), fundamental.backend.truncation
        )

    return AbsorptionMatrix(absorption, system.interior.copy(), system.boundary.copy())


def single_seed_absorption(fundamental: FundamentalMatrix, node: int) -> np.ndarray:
    """Absorption into `node` once it becomes a seed: `F[:, s] / F[s, s]`.

    The result is aligned with the interior of `fundamental`; the entry for
    `node` itself is one.

    """
    return fundamental.normalized_column(node)


def identity_residual(
    fundamental: FundamentalMatrix, system: TransitionSystem
) -> float:
    """Largest entry of `|F - (I + F R)|`, zero for an exact inverse."""
    _check_same_interior(fundamental, system)
    values = fundamental.dense()
    product = np.asarray((system.R.T @ values.T).T)
    return float(np.max(np.abs(values - np.eye(len(values)) - product)))


def solve_interior(
    system: TransitionSystem, rhs: np.ndarray, backend: Backend
) -> np.ndarray:
    """Solve `(I - R) x = rhs` exactly or by the truncated series."""
    if system.n_interior == 0:
        return np.zeros_like(rhs, dtype=np.float64)
    if backend.kind == NEUMANN:
        return neumann_apply(system.R, rhs, backend.truncation)

    check_boundary_reachable(system)
    laplacian = (sp.identity(system.n_interior, format='csc') - system.R).tocsc()
    return scipy.sparse.linalg.splu(laplacian).solve(np.asarray(rhs, dtype=np.float64))


def steady_state(
    system: TransitionSystem,
    b: float = 0.0,
    backend: Backend | None = None,
    fundamental: FundamentalMatrix | None = None,
) -> SteadyState:
    """Harmonic extension of the boundary values: `v_I = Q v_B`.

    When `fundamental` is given the interior values are read from it,
    otherwise `(I - R) v_I = B v_B` is solved with `backend`.

    """
    if not 0 <= b <= 1:
        raise InvalidNetworkParameter('b', 'bias value must lie in [0, 1].')

    v = np.zeros(system.n)
    v[np.array(system.seeds.members, dtype=np.int64)] = 1.0
    v[system.bias_index] = b

    if system.n_interior:
        rhs = system.B_block @ v[system.boundary]
        if fundamental is not None:
            _check_same_interior(fundamental, system)
            if fundamental.backend.kind == DENSE:
                interior_values = fundamental.dense() @ rhs
            else:
                interior_values = neumann_apply(
                    system.R, rhs, fundamental.backend.truncation
                )
        else:
            interior_values = solve_interior(system, rhs, backend or Backend.dense())
        v[system.interior] = np.clip(interior_values, 0.0, 1.0)

    return SteadyState(
        v=v,
        seed_context=system.seeds,
        sigma=float(v[: system.n_raw].sum()),
        b=b,
    )


def influence_spread(
    augmented: AugmentedNetwork,
    seeds: SeedSet | Iterable[int],
    backend: Backend | str | None = AUTO,
    dense_threshold: int = DEFAULT_DENSE_THRESHOLD,
    truncation: int | None = None,
) -> float:
    """Expected number of active original nodes at steady state.

    For `b = 0` this is `|S|` plus the absorption mass of every interior
    node into the seeds. For `b > 0` the steady-state sum is returned.

    """
    seeds = as_seed_set(seeds)
    if not len(seeds) and augmented.bias_value == 0:
        raise InvalidSeedSet('the seed set is empty and b = 0.')

    system = build_transition_system(augmented, seeds)
    backend = resolve_backend(backend, augmented, dense_threshold, truncation)

    if augmented.bias_value != 0:
        return steady_state(system, augmented.bias_value, backend=backend).sigma

    into_seeds = np.asarray(system.B_block[:, : len(seeds)].sum(axis=1)).ravel()
    absorbed = solve_interior(system, into_seeds, backend)
    # The bias row of the interior solution is always zero.
    return float(len(seeds) + absorbed[system.interior < system.n_raw].sum())


def marginal_gains(
    augmented: AugmentedNetwork,
    seeds: SeedSet | Iterable[int],
    backend: Backend | str | None = AUTO,
    dense_threshold: int = DEFAULT_DENSE_THRESHOLD,
    truncation: int | None = None,
) -> np.ndarray:
    """Closed-form gain `sigma(S + s) - sigma(S)` for every original node.

    Each gain is `(1 - v_s) * sum_i F_is / F_ss` under the fundamental matrix
    of S. Seeds have zero gain.

    """
    seeds = as_seed_set(seeds)
    backend = resolve_backend(backend, augmented, dense_threshold, truncation)
    if backend.kind == DENSE and augmented.bias_value == 0:
        return ClosedFormSpread(augmented).marginal_gains(seeds)

    system = build_transition_system(augmented, seeds)
    gains = np.zeros(augmented.n_raw)
    if system.n_interior == 0:
        return gains

    if backend.kind == DENSE:
        fundamental = compute_fundamental_dense(system)
    else:
        fundamental = compute_fundamental_neumann(
            system, backend.truncation, backend.samples
        )

    state = steady_state(system, augmented.bias_value, fundamental=fundamental)
    interior = fundamental.interior
    gains[interior] = (1.0 - state.v[interior]) * fundamental.normalized_column_sums()
    return gains


class ClosedFormSpread:
    """Evaluate spread for many small seed sets from one fundamental matrix.

    With `G` the fundamental matrix of the empty seed set, every column
    `G[:, s]` is harmonic away from `s` and vanishes at the bias node, so the
    steady state of S is `G[:, S] x` with `G[S, S] x = 1` and
    `sigma(S) = colsum(G)[S] . x`.

    """

    def __init__(self, augmented: AugmentedNetwork):
        """Factorize the empty-seed system once."""
        if augmented.bias_value != 0:
            raise InvalidNetworkParameter(
                'b', 'closed-form spread evaluation is defined for b = 0.'
            )
        self.augmented = augmented
        fundamental = compute_fundamental_dense(build_transition_system(augmented))
        self.values = fundamental.values
        self.column_sums = fundamental.column_sums
        self.evaluations = 0

    @property
    def n_raw(self) -> int:
        """Number of original nodes."""
        return self.augmented.n_raw

    def _seed_weights(self, nodes: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.values[np.ix_(nodes, nodes)], np.ones(len(nodes)))

    def sigma(self, seeds: SeedSet | Iterable[int]) -> float:
        """Spread of one seed set."""
        nodes = np.array(as_seed_set(seeds).members, dtype=np.int64)
        self.evaluations += 1
        if not len(nodes):
            return 0.0
        weights = self._seed_weights(nodes)
        return float(self.column_sums[nodes] @ weights)

    def sigma_batch(self, subsets: np.ndarray) -> np.ndarray:
        """Spread of each row of an `(count, k)` array of seed sets."""
        subsets = np.asarray(subsets, dtype=np.int64)
        count, size = subsets.shape
        self.evaluations += count
        if size == 0:
            return np.zeros(count)
        blocks = self.values[subsets[:, :, None], subsets[:, None, :]]
        weights = np.linalg.solve(blocks, np.ones((count, size, 1)))[..., 0]
        return (self.column_sums[subsets] * weights).sum(axis=1)

    def steady_state_values(self, seeds: SeedSet | Iterable[int]) -> np.ndarray:
        """Adoption probabilities of the original nodes."""
        nodes = np.array(as_seed_set(seeds).members, dtype=np.int64)
        if not len(nodes):
            return np.zeros(self.n_raw)
        weights = self._seed_weights(nodes)
        values = self.values[:, nodes] @ weights
        values[nodes] = 1.0
        return np.clip(values, 0.0, 1.0)

    def marginal_gains(self, seeds: SeedSet | Iterable[int]) -> np.ndarray:
        """Gain of adding each node to `seeds`; seeds themselves get zero."""
        nodes = np.array(as_seed_set(seeds).members, dtype=np.int64)
        if not len(nodes):
            return self.column_sums / np.diagonal(self.values)

        block = self.values[np.ix_(nodes, nodes)]
        eliminated = np.linalg.solve(block, self.values[nodes, :])
        column_sums = self.column_sums - self.column_sums[nodes] @ eliminated
        diagonal = np.diagonal(self.values) - np.einsum(
            'js,sj->j', self.values[:, nodes], eliminated
        )
        values = self.steady_state_values(nodes)

        gains = np.zeros(self.n_raw)
        free = np.ones(self.n_raw, dtype=bool)
        free[nodes] = False
        gains[free] = (1.0 - values[free]) * column_sums[free] / diagonal[free]
        return gains
