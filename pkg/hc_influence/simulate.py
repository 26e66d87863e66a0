"""Monte Carlo and deterministic transient oracles for Heat Conduction.

The binary process redraws every non-seed node at each step: node `i` is
active at `t + 1` with probability `P_i,bias * delta_bias + sum_j P_ij
delta_j(t)`, where the bias node's state is a fresh Bernoulli(b) draw per
step. The transient process iterates the same chain on real-valued states.
Voter, NLT and binary GLT are instances of the same step under constraints
on beta, the weights and b.

"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from hc_influence.exceptions import (
    InvalidNetworkParameter,
    ModeConstraintError,
    ShapeMismatchError,
    UnknownMethodError,
)
from hc_influence.generators import estimate_effective_diameter
from hc_influence.graph import (
    STOCHASTIC_TOLERANCE,
    AugmentedNetwork,
    Network,
    SeedSet,
    TransitionSystem,
    as_seed_set,
    augment_with_bias,
    build_transition_system,
)
from hc_influence.rng import RunBatch, make_run_batches

logger = logging.getLogger(__name__)

HC = 'hc'
HC_GENERAL = 'hc_general'
VOTER = 'voter'
NLT = 'nlt'
GLT_BINARY = 'glt_binary'
MODE_KINDS = (HC, HC_GENERAL, VOTER, NLT, GLT_BINARY)
GLT_BIAS_VALUE = 0.5

BERNOULLI = 'bernoulli'
THRESHOLD = 'threshold'
SAMPLERS = (BERNOULLI, THRESHOLD)

CONVERGENCE_TOLERANCE = 1e-10
HORIZON_DIAMETER_FACTOR = 10
MODE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ModelMode:
    """Which diffusion model a simulation realises.

    `media_m` and `reluctance_r` apply to `hc_general` only and default to
    the values stored on the network. `glt_beta` is the uniform
    random-product probability of `glt_binary`.

    """

    kind: str = HC
    media_m: float | None = None
    reluctance_r: float | None = None
    glt_beta: float | None = None

    def __post_init__(self):
        """Reject unknown kinds."""
        if self.kind not in MODE_KINDS:
            raise UnknownMethodError('model mode', self.kind, MODE_KINDS)

    @classmethod
    def parse(cls, text: str) -> ModelMode:
        """Parse `hc`, `voter`, `nlt`, `hc_general[:m,r]` or `glt_binary:beta`."""
        kind, _, arguments = text.strip().partition(':')
        if kind == HC_GENERAL and arguments:
            media_m, reluctance_r = (float(value) for value in arguments.split(','))
            return cls(kind, media_m=media_m, reluctance_r=reluctance_r)
        if kind == GLT_BINARY and arguments:
            return cls(kind, glt_beta=float(arguments))
        return cls(kind)

    def __str__(self) -> str:
        """Name used in logs and result tables."""
        return self.kind

    def validate(self, augmented: AugmentedNetwork) -> None:
        """Check the mode's constraints on beta, the weights and b."""
        network = augmented.network
        if self.kind == VOTER:
            if np.any(np.abs(network.beta) > MODE_TOLERANCE):
                raise ModeConstraintError(self.kind, 'every beta_i must be 0.')
            totals = np.bincount(
                network.sources, weights=network.weights, minlength=network.n_raw
            )
            expected = 1.0 / network.out_degree()[network.sources]
            actual = network.weights / totals[network.sources]
            if np.any(np.abs(actual - expected) > MODE_TOLERANCE):
                raise ModeConstraintError(self.kind, 'weights must equal 1/out-degree.')
        elif self.kind == NLT:
            if augmented.bias_value != 0:
                raise ModeConstraintError(self.kind, 'the bias value b must be 0.')
        elif self.kind == GLT_BINARY:
            beta = float(network.beta[0]) if self.glt_beta is None else self.glt_beta
            if np.any(np.abs(network.beta - beta) > MODE_TOLERANCE):
                raise ModeConstraintError(self.kind, 'beta must be uniform.')
            if abs(augmented.bias_value - GLT_BIAS_VALUE) > MODE_TOLERANCE:
                raise ModeConstraintError(
                    self.kind, 'b must be 1/2 so that the bias term is beta / 2.'
                )

    def media_and_reluctance(self, network: Network) -> tuple[float, float]:
        """Media and reluctance values of the general model."""
        media_m = network.media_m if self.media_m is None else self.media_m
        reluctance_r = (
            network.reluctance_r if self.reluctance_r is None else self.reluctance_r
        )
        return media_m, reluctance_r


def general_bias_values(
    network: Network, media_m: float | None = None, reluctance_r: float | None = None
) -> np.ndarray:
    """Per-node bias values that realise general HC on one bias node.

    Node `i` pulls towards the media value with strength `alpha_i` and the
    reluctance value with strength `gamma_i`. Merged into one bias edge of
    strength `alpha_i + gamma_i`, the bias value it sees is
    `(alpha_i m + gamma_i r) / (alpha_i + gamma_i)`. The returned vector has
    `n_raw + 1` entries; the bias node itself carries `m`.

    """
    media_m = network.media_m if media_m is None else media_m
    reluctance_r = network.reluctance_r if reluctance_r is None else reluctance_r
    strength = network.alpha + network.gamma
    pulled = network.alpha * media_m + network.gamma * reluctance_r
    values = np.full(network.n_raw + 1, media_m)
    positive = strength > 0
    values[: network.n_raw][positive] = pulled[positive] / strength[positive]
    return values


def augment_for_mode(
    network: Network, mode: ModelMode, b: float = 0.0
) -> AugmentedNetwork:
    """Augment a network the way a mode requires.

    General HC merges the media and reluctance edges into one bias edge of
    strength `alpha + gamma`; the per-node bias values come from
    `general_bias_values`.

    """
    if mode.kind == HC_GENERAL:
        media_m, _ = mode.media_and_reluctance(network)
        merged = replace(network, beta=network.alpha + network.gamma)
        return augment_with_bias(merged, media_m)
    if mode.kind == GLT_BINARY and mode.glt_beta is not None:
        return augment_with_bias(network.with_beta(mode.glt_beta), GLT_BIAS_VALUE)
    return augment_with_bias(network, b)


def network_from_nlt(nlt_network: Network) -> Network:
    """The HC network equivalent to a normalized linear threshold instance.

    NLT in-weights of node `i` sum to `1 - g_i`. The HC instance uses
    `beta_i = g_i` and `omega_ij = omega_nlt_ij / (1 - g_i)`, so that
    `(1 - beta_i) omega_ij` reproduces the NLT weights with `b = 0`.

    """
    totals = np.bincount(
        nlt_network.sources, weights=nlt_network.weights, minlength=nlt_network.n_raw
    )
    if np.any(totals > 1 + STOCHASTIC_TOLERANCE):
        node = int(np.flatnonzero(totals > 1 + STOCHASTIC_TOLERANCE)[0])
        raise InvalidNetworkParameter(
            'weights', f'NLT weights of node {node} exceed 1.'
        )

    followed = totals > 0
    gaps = np.where(followed, np.clip(1.0 - totals, 0.0, None), 0.0)
    scale = np.divide(1.0, totals, out=np.zeros_like(totals), where=followed)
    return Network(
        nlt_network.n_raw,
        nlt_network.sources,
        nlt_network.destinations,
        nlt_network.weights * scale[nlt_network.sources],
        beta=gaps,
        labels=nlt_network.labels,
    )


def default_horizon(network: Network) -> int:
    """Monte Carlo horizon: ten times the effective diameter."""
    if network.n_edges == 0:
        return 1
    return HORIZON_DIAMETER_FACTOR * max(1, estimate_effective_diameter(network))


@dataclass(frozen=True, eq=False)
class CascadeState:
    """Binary states of the original nodes for a block of independent runs.

    `active` has shape `(n_raw, runs)`. Seeds are active at every step.

    """

    active: np.ndarray
    seeds: SeedSet
    rng: np.random.Generator
    t: int = 0

    @classmethod
    def initial(
        cls,
        augmented: AugmentedNetwork,
        seeds: SeedSet | Iterable[int],
        runs: int,
        rng: np.random.Generator,
        initially_active: np.ndarray | None = None,
    ) -> CascadeState:
        """Seeds active, and optionally a mask of other active nodes."""
        seeds = as_seed_set(seeds)
        seeds.validate(augmented)
        active = np.zeros((augmented.n_raw, runs), dtype=bool)
        if initially_active is not None:
            active[np.asarray(initially_active, dtype=bool)] = True
        active[list(seeds.members)] = True
        return cls(active, seeds, rng)

    def active_counts(self) -> np.ndarray:
        """Number of active original nodes in each run."""
        return self.active.sum(axis=0)


@dataclass(frozen=True)
class _StepWeights:
    social: sp.csr_array
    bias: np.ndarray
    media_share: np.ndarray | None = None
    media_m: float = 0.0
    reluctance_r: float = 0.0


def _step_weights(augmented: AugmentedNetwork, mode: ModelMode) -> _StepWeights:
    bias = augmented.bias_weights
    if mode.kind != HC_GENERAL:
        return _StepWeights(augmented.social_block(), bias)

    network = augmented.network
    media_m, reluctance_r = mode.media_and_reluctance(network)
    strength = network.alpha + network.gamma
    share = np.ones(augmented.n_raw)
    positive = strength > 0
    share[positive] = network.alpha[positive] / strength[positive]
    return _StepWeights(augmented.social_block(), bias, share, media_m, reluctance_r)


def _choice_probabilities(
    weights: _StepWeights, active: np.ndarray, rng: np.random.Generator, b: float
) -> np.ndarray:
    runs = active.shape[1]
    probabilities = weights.social @ active.astype(np.float64)
    if weights.media_share is None:
        bias_on = (rng.random(runs) < b).astype(np.float64)
        probabilities += weights.bias[:, None] * bias_on[None, :]
    else:
        media_on = (rng.random(runs) < weights.media_m).astype(np.float64)
        reluctance_on = (rng.random(runs) < weights.reluctance_r).astype(np.float64)
        share = weights.media_share[:, None]
        probabilities += weights.bias[:, None] * (
            share * media_on[None, :] + (1.0 - share) * reluctance_on[None, :]
        )
    return np.clip(probabilities, 0.0, 1.0)


def _advance(
    state: CascadeState,
    weights: _StepWeights,
    b: float,
    sampler: str,
) -> CascadeState:
    probabilities = _choice_probabilities(weights, state.active, state.rng, b)
    if sampler == BERNOULLI:
        active = state.rng.binomial(1, probabilities).astype(bool)
    else:
        active = state.rng.uniform(0.0, 1.0, size=probabilities.shape) <= probabilities
        # A zero-probability node never adopts, even when theta is exactly zero.
        active &= probabilities > 0
    active[list(state.seeds.members)] = True
    return CascadeState(active, state.seeds, state.rng, state.t + 1)


def step_binary(
    state: CascadeState,
    augmented: AugmentedNetwork,
    mode: ModelMode | None = None,
    sampler: str = BERNOULLI,
) -> CascadeState:
    """Redraw every non-seed node once.

    With `sampler='bernoulli'` each node is a Bernoulli draw of its choice
    probability. With `sampler='threshold'` a node adopts when a fresh
    uniform threshold is at most its active weighted mass; both give the
    same adoption law.

    """
    mode = mode or ModelMode()
    if sampler not in SAMPLERS:
        raise UnknownMethodError('sampler', sampler, SAMPLERS)
    if state.active.shape[0] != augmented.n_raw:
        raise ShapeMismatchError(
            f'state covers {state.active.shape[0]} nodes, '
            f'network has {augmented.n_raw}.'
        )
    mode.validate(augmented)
    weights = _step_weights(augmented, mode)
    return _advance(state, weights, augmented.bias_value, sampler)


@dataclass(frozen=True, eq=False)
class TransientState:
    """Real-valued node states `u(t)` over the augmented network.

    Boundary entries are pinned: seeds at one and the bias node at `b`.
    `z` holds the initial values of the interior nodes.

    """

    u: np.ndarray
    t: int
    z: np.ndarray

    @classmethod
    def initial(
        cls,
        system: TransitionSystem,
        b: float | np.ndarray = 0.0,
        z: np.ndarray | None = None,
    ) -> TransientState:
        """Seeds at one, bias at `b`, interior at `z` (zero by default)."""
        if z is None:
            z = np.zeros(system.n_interior)
        z = np.asarray(z, dtype=np.float64)
        if len(z) != system.n_interior:
            raise ShapeMismatchError(
                f'z has {len(z)} entries for {system.n_interior} interior nodes.'
            )
        u = np.zeros(system.n)
        u[system.interior] = np.clip(z, 0.0, 1.0)
        u[list(system.seeds.members)] = 1.0
        u[system.bias_index] = _bias_vector(system, b)[system.bias_index]
        return cls(u, 0, z)


def _bias_vector(system: TransitionSystem, b: float | np.ndarray) -> np.ndarray:
    if np.ndim(b) == 0:
        return np.full(system.n, float(b))
    values = np.asarray(b, dtype=np.float64)
    if len(values) != system.n:
        raise ShapeMismatchError(f'b has {len(values)} entries for {system.n} nodes.')
    return values


def step_transient(
    state: TransientState, system: TransitionSystem, b: float | np.ndarray = 0.0
) -> TransientState:
    """One step `u(t + 1) = P u(t)` with boundary rows pinned.

    `b` may be a scalar or one bias value per augmented node, in which case
    node `i` reads `b[i]` through its bias edge.

    """
    if len(state.u) != system.n:
        raise ShapeMismatchError(f'u has {len(state.u)} entries for {system.n} nodes.')
    bias_values = _bias_vector(system, b)
    bias_column = system.P[:, [system.bias_index]].toarray().ravel()

    current = state.u.copy()
    current[system.bias_index] = 0.0
    u = system.P @ current + bias_column * bias_values
    u[list(system.seeds.members)] = 1.0
    u[system.bias_index] = bias_values[system.bias_index]
    return TransientState(np.clip(u, 0.0, 1.0), state.t + 1, state.z)


def transient_trajectory(
    augmented: AugmentedNetwork,
    seeds: SeedSet | Iterable[int],
    horizon: int,
    z: np.ndarray | None = None,
    b: float | np.ndarray | None = None,
    early_stop: bool = True,
) -> np.ndarray:
    """Deterministic spread `sum_i u(i, t)` over original nodes for t = 0..horizon.

    When the states stop changing (max change below 1e-10) the remaining
    entries repeat the last value.

    """
    if horizon < 0:
        raise InvalidNetworkParameter('t', 'must be >= 0.')
    system = build_transition_system(augmented, seeds)
    b = augmented.bias_value if b is None else b
    state = TransientState.initial(system, b, z)

    spreads = np.empty(horizon + 1)
    spreads[0] = state.u[: system.n_raw].sum()
    for step in range(1, horizon + 1):
        following = step_transient(state, system, b)
        spreads[step] = following.u[: system.n_raw].sum()
        converged = np.max(np.abs(following.u - state.u)) < CONVERGENCE_TOLERANCE
        state = following
        if early_stop and converged:
            spreads[step:] = spreads[step]
            logger.debug('Transient converged after %d steps', step)
            break
    return spreads


def transient_spread(
    augmented: AugmentedNetwork,
    seeds: SeedSet | Iterable[int],
    t: int,
    z: np.ndarray | None = None,
    b: float | np.ndarray | None = None,
) -> float:
    """Deterministic spread at step `t`."""
    return float(transient_trajectory(augmented, seeds, t, z, b)[-1])


@dataclass(frozen=True)
class MonteCarloSummary:
    """Per-step mean and standard error of the active count."""

    mean: np.ndarray
    stderr: np.ndarray
    runs: int


def _run_batch(
    batch: RunBatch,
    augmented: AugmentedNetwork,
    seeds: SeedSet,
    weights: _StepWeights,
    horizon: int,
    sampler: str,
    initially_active: np.ndarray | None,
    record_steps: bool,
) -> tuple[np.ndarray, np.ndarray]:
    state = CascadeState.initial(
        augmented, seeds, batch.size, batch.rng, initially_active
    )
    counts = [state.active_counts()] if record_steps else []
    for _ in range(horizon):
        state = _advance(state, weights, augmented.bias_value, sampler)
        if record_steps:
            counts.append(state.active_counts())
    if not record_steps:
        counts = [state.active_counts()]
    return np.array(counts, dtype=np.float64), state.active.sum(axis=1)


def _simulate(
    augmented: AugmentedNetwork,
    seeds: SeedSet | Iterable[int],
    mode: ModelMode | None,
    horizon: int,
    runs: int,
    rng_seed: int | None,
    sampler: str,
    threads: int,
    initially_active: np.ndarray | None,
    record_steps: bool,
) -> tuple[np.ndarray, np.ndarray]:
    mode = mode or ModelMode()
    if horizon < 1:
        raise InvalidNetworkParameter('horizon', 'must be >= 1.')
    if runs < 1:
        raise InvalidNetworkParameter('runs', 'must be >= 1.')
    if sampler not in SAMPLERS:
        raise UnknownMethodError('sampler', sampler, SAMPLERS)
    mode.validate(augmented)

    seeds = as_seed_set(seeds)
    seeds.validate(augmented)
    weights = _step_weights(augmented, mode)
    batches = make_run_batches(rng_seed, runs)

    def run(batch: RunBatch):
        return _run_batch(
            batch,
            augmented,
            seeds,
            weights,
            horizon,
            sampler,
            initially_active,
            record_steps,
        )

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        results = list(executor.map(run, batches))

    counts = np.concatenate([result[0] for result in results], axis=1)
    adoptions = np.sum([result[1] for result in results], axis=0)
    logger.debug(
        'Simulated %d runs of %s over %d steps in %d batches',
        runs,
        mode,
        horizon,
        len(batches),
    )
    return counts, adoptions


def _summarize(counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    runs = counts.shape[1]
    mean = counts.mean(axis=1)
    if runs < 2:
        return mean, np.zeros_like(mean)
    return mean, counts.std(axis=1, ddof=1) / math.sqrt(runs)


def mc_spread_estimate(
    augmented: AugmentedNetwork,
    seeds: SeedSet | Iterable[int],
    mode: ModelMode | None = None,
    horizon: int = 100,
    runs: int = 1000,
    rng_seed: int | None = 0,
    sampler: str = BERNOULLI,
    threads: int = 1,
    initially_active: np.ndarray | None = None,
) -> tuple[float, float]:
    """Mean active count at the horizon and its standard error.

    Runs are grouped into fixed batches with private random streams, so the
    estimate depends on `rng_seed` and not on `threads`.

    """
    counts, _ = _simulate(
        augmented,
        seeds,
        mode,
        horizon,
        runs,
        rng_seed,
        sampler,
        threads,
        initially_active,
        record_steps=False,
    )
    mean, stderr = _summarize(counts)
    return float(mean[-1]), float(stderr[-1])


def mc_trajectory(
    augmented: AugmentedNetwork,
    seeds: SeedSet | Iterable[int],
    mode: ModelMode | None = None,
    horizon: int = 100,
    runs: int = 1000,
    rng_seed: int | None = 0,
    sampler: str = BERNOULLI,
    threads: int = 1,
    initially_active: np.ndarray | None = None,
) -> MonteCarloSummary:
    """Mean active count and standard error at every step 0..horizon."""
    counts, _ = _simulate(
        augmented,
        seeds,
        mode,
        horizon,
        runs,
        rng_seed,
        sampler,
        threads,
        initially_active,
        record_steps=True,
    )
    mean, stderr = _summarize(counts)
    return MonteCarloSummary(mean, stderr, runs)


def mc_adoption_frequencies(
    augmented: AugmentedNetwork,
    seeds: SeedSet | Iterable[int],
    mode: ModelMode | None = None,
    horizon: int = 100,
    runs: int = 1000,
    rng_seed: int | None = 0,
    threads: int = 1,
) -> np.ndarray:
    """Fraction of runs in which each original node is active at the horizon."""
    _, adoptions = _simulate(
        augmented,
        seeds,
        mode,
        horizon,
        runs,
        rng_seed,
        BERNOULLI,
        threads,
        None,
        record_steps=False,
    )
    return adoptions / runs


def simulate_nlt_direct(
    nlt_network: Network,
    seeds: SeedSet | Iterable[int],
    horizon: int,
    runs: int,
    rng_seed: int | None = 0,
) -> tuple[float, float]:
    """Non-progressive NLT on raw NLT weights, for checking the HC reduction.

    Every step each non-seed node draws a uniform threshold and adopts when
    the NLT weight of its active neighbours reaches it.

    """
    seeds = as_seed_set(seeds)
    adjacency = nlt_network.adjacency()
    seed_nodes = list(seeds.members)
    finals = []
    for batch in make_run_batches(rng_seed, runs):
        active = np.zeros((nlt_network.n_raw, batch.size), dtype=bool)
        active[seed_nodes] = True
        for _ in range(horizon):
            mass = adjacency @ active.astype(np.float64)
            thresholds = batch.rng.uniform(0.0, 1.0, size=mass.shape)
            active = (thresholds <= mass) & (mass > 0)
            active[seed_nodes] = True
        finals.append(active.sum(axis=0))
    mean, stderr = _summarize(np.concatenate(finals)[None, :].astype(np.float64))
    return float(mean[0]), float(stderr[0])


def simulate_glt_binary_direct(
    network: Network,
    beta: float,
    seeds: SeedSet | Iterable[int],
    horizon: int,
    runs: int,
    rng_seed: int | None = 0,
) -> tuple[float, float]:
    """Two-colour GLT by neighbour copying, for checking the HC reduction.

    With probability `beta` (always, for a node that follows nobody) a node
    takes a uniformly random colour; otherwise it copies the state of one
    followed node drawn with probability proportional to its weight.

    """
    seeds = as_seed_set(seeds)
    seed_nodes = list(seeds.members)
    normalized = network.normalized_weights()
    indptr, indices = normalized.indptr, normalized.indices
    cumulative = np.cumsum(normalized.data)
    row_start = np.concatenate([[0.0], cumulative])[indptr[:-1]]
    row_last = np.maximum(indptr[1:] - 1, 0)
    dangling = np.diff(indptr) == 0

    finals = []
    for batch in make_run_batches(rng_seed, runs):
        rng = batch.rng
        run_index = np.arange(batch.size)[None, :]
        active = np.zeros((network.n_raw, batch.size), dtype=bool)
        active[seed_nodes] = True
        for _ in range(horizon):
            shape = active.shape
            randomize = (rng.random(shape) < beta) | dangling[:, None]
            random_colour = rng.random(shape) < 0.5
            targets = row_start[:, None] + rng.random(shape)
            positions = np.searchsorted(cumulative, targets, side='right')
            positions = np.minimum(positions, row_last[:, None])
            followed = indices[positions] if len(indices) else positions
            copied = active[followed, run_index]
            active = np.where(randomize, random_colour, copied)
            active[seed_nodes] = True
        finals.append(active.sum(axis=0))
    mean, stderr = _summarize(np.concatenate(finals)[None, :].astype(np.float64))
    return float(mean[0]), float(stderr[0])
