"""Seed selection: closed-form greedy, Monte Carlo greedy, brute force, baselines."""

from __future__ import annotations

import heapq
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from time import perf_counter
from typing import Callable, Iterable

import numpy as np

from hc_influence.exceptions import (
    CapacityExceededError,
    InvalidBudgetError,
    UnknownMethodError,
)
from hc_influence.graph import (
    AugmentedNetwork,
    Network,
    SeedSet,
    as_seed_set,
    build_transition_system,
)
from hc_influence.simulate import ModelMode, default_horizon, mc_spread_estimate
from hc_influence.spread import (
    AUTO,
    DEFAULT_DENSE_THRESHOLD,
    DENSE,
    Backend,
    ClosedFormSpread,
    compute_fundamental_dense,
    compute_fundamental_neumann,
    influence_spread,
    marginal_gains,
    resolve_backend,
    steady_state,
    update_fundamental_rank1,
)

logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-9
RANKING_DECIMALS = 9

PLAIN = 'plain'
LAZY = 'lazy'
C1 = 'c1'
LAZY_C1 = 'lazy_c1'
MC_VARIANTS = (PLAIN, LAZY, C1, LAZY_C1)

DEGREE = 'degree'
PAGERANK = 'pagerank'
RANDOM = 'random'
BASELINES = (DEGREE, PAGERANK, RANDOM)

PAGERANK_DAMPING = 0.85
PAGERANK_TOLERANCE = 1e-10
PAGERANK_MAX_ITERATIONS = 10_000

DEFAULT_BRUTE_FORCE_CAP = 1_000_000
BRUTE_FORCE_CHUNK = 4096


@dataclass(frozen=True)
class TraceStep:
    """One selected seed."""

    seed: int
    label: str
    marginal_gain: float
    sigma_after: float
    elapsed: float
    evaluations: int


@dataclass
class GreedyTrace:
    """The ordered output of a seed selector.

    `elapsed` on each step is wall time in seconds for that step;
    `setup_seconds` covers work done before the first step, such as
    factorizing F. `evaluations` counts spread evaluations.

    """

    algorithm: str
    backend: str
    steps: list[TraceStep] = field(default_factory=list)
    setup_seconds: float = 0.0

    @property
    def seeds(self) -> list[int]:
        """Seeds in selection order."""
        return [step.seed for step in self.steps]

    @property
    def sigmas(self) -> list[float]:
        """Spread after each step."""
        return [step.sigma_after for step in self.steps]

    @property
    def total_evaluations(self) -> int:
        """Spread evaluations over all steps."""
        return sum(step.evaluations for step in self.steps)

    @property
    def total_seconds(self) -> float:
        """Setup time plus the time of every step."""
        return self.setup_seconds + sum(step.elapsed for step in self.steps)

    def seed_set(self) -> SeedSet:
        """The selected seeds as a SeedSet."""
        return SeedSet(tuple(self.seeds))

    def record(
        self,
        augmented: AugmentedNetwork,
        seed: int,
        gain: float,
        sigma: float,
        started: float,
        evaluations: int,
    ) -> None:
        """Append a step timed from `started`."""
        self.steps.append(
            TraceStep(
                seed=int(seed),
                label=augmented.labels[seed],
                marginal_gain=float(gain),
                sigma_after=float(sigma),
                elapsed=perf_counter() - started,
                evaluations=evaluations,
            )
        )


@dataclass(frozen=True)
class BoundReport:
    """Data-dependent upper bounds on the optimal spread for budget K."""

    online_bound: float
    offline_bound: float
    achieved_sigma: float

    @property
    def ratio(self) -> float:
        """Achieved spread as a fraction of the online bound."""
        if self.online_bound <= 0:
            return 1.0
        return self.achieved_sigma / self.online_bound


def argmax_lowest_index(scores: np.ndarray, tolerance: float = TIE_TOLERANCE) -> int:
    """Position of the maximum; near-ties resolve to the lowest position."""
    scores = np.asarray(scores, dtype=np.float64)
    best = np.max(scores)
    threshold = best - tolerance * max(1.0, abs(best))
    return int(np.flatnonzero(scores >= threshold)[0])


def top_k_lowest_index(scores: np.ndarray, k: int) -> np.ndarray:
    """Positions of the K largest scores, ties broken by lowest position."""
    rounded = np.round(np.asarray(scores, dtype=np.float64), RANKING_DECIMALS)
    return np.argsort(-rounded, kind='stable')[:k]


def check_budget(augmented: AugmentedNetwork, budget: int) -> None:
    """Raise InvalidBudgetError unless `1 <= K <= n_raw`."""
    if not 1 <= budget <= augmented.n_raw:
        raise InvalidBudgetError(budget, augmented.n_raw)


def _fundamental_for(system, backend: Backend):
    if backend.kind == DENSE:
        return compute_fundamental_dense(system)
    return compute_fundamental_neumann(system, backend.truncation, backend.samples)


def most_influential(
    augmented: AugmentedNetwork,
    backend: Backend | str | None = AUTO,
    dense_threshold: int = DEFAULT_DENSE_THRESHOLD,
    truncation: int | None = None,
) -> int:
    """The single node with the largest spread: `argmax_s sum_i F_is / F_ss`."""
    backend = resolve_backend(backend, augmented, dense_threshold, truncation)
    system = build_transition_system(augmented)
    fundamental = _fundamental_for(system, backend)
    state = steady_state(system, augmented.bias_value, fundamental=fundamental)
    interior = fundamental.interior
    scores = (1.0 - state.v[interior]) * fundamental.normalized_column_sums()
    return int(interior[argmax_lowest_index(scores)])


def c2greedy(
    augmented: AugmentedNetwork,
    budget: int,
    backend: Backend | str | None = AUTO,
    dense_threshold: int = DEFAULT_DENSE_THRESHOLD,
    truncation: int | None = None,
) -> GreedyTrace:
    """Greedy selection with closed-form gains and closed-form updates.

    Each step scores every interior node by `(1 - v_s) * sum_i F_is / F_ss`,
    which is its exact marginal gain, takes the best, and updates the
    steady state with `v += (1 - v_s) F[:, s] / F_ss`. The dense backend
    then removes the seed from F with a rank-1 update; the Neumann backend
    recomputes the truncated diagonal and column sums.

    """
    check_budget(augmented, budget)
    backend = resolve_backend(backend, augmented, dense_threshold, truncation)

    started = perf_counter()
    system = build_transition_system(augmented)
    fundamental = _fundamental_for(system, backend)
    v = steady_state(system, augmented.bias_value, fundamental=fundamental).v
    trace = GreedyTrace(
        'c2greedy', str(backend), setup_seconds=perf_counter() - started
    )
    logger.info('Factorized %d interior nodes with %s', system.n_interior, backend)

    seeds = SeedSet()
    for step in range(budget):
        started = perf_counter()
        interior = fundamental.interior
        scores = (1.0 - v[interior]) * fundamental.normalized_column_sums()
        position = argmax_lowest_index(scores)
        seed = int(interior[position])

        v[interior] += (1.0 - v[seed]) * fundamental.normalized_column(seed)
        v[seed] = 1.0
        seeds = seeds.add(seed)

        if step < budget - 1:
            if backend.kind == DENSE:
                fundamental = update_fundamental_rank1(fundamental, seed, in_place=True)
            else:
                system = build_transition_system(augmented, seeds)
                fundamental = _fundamental_for(system, backend)

        trace.record(
            augmented, seed, scores[position], v[: augmented.n_raw].sum(), started, 1
        )
        logger.debug(
            'Step %d selected node %d, gain %.6f', step, seed, scores[position]
        )

    return trace


def _spread_evaluator(
    augmented: AugmentedNetwork,
    variant: str,
    runs: int,
    horizon: int | None,
    rng_seed: int | None,
    threads: int,
    mode: ModelMode | None,
    backend: Backend | str | None,
    dense_threshold: int,
) -> Callable[[SeedSet], float]:
    if variant in (C1, LAZY_C1):
        backend = resolve_backend(backend, augmented, dense_threshold)
        if backend.kind == DENSE and augmented.bias_value == 0:
            oracle = ClosedFormSpread(augmented)
            return oracle.sigma
        return lambda seeds: influence_spread(augmented, seeds, backend)

    horizon = default_horizon(augmented.network) if horizon is None else horizon
    return lambda seeds: mc_spread_estimate(
        augmented, seeds, mode, horizon, runs, rng_seed, threads=threads
    )[0]


def mc_greedy(
    augmented: AugmentedNetwork,
    budget: int,
    runs: int = 1000,
    variant: str = PLAIN,
    horizon: int | None = None,
    rng_seed: int | None = 0,
    threads: int = 1,
    mode: ModelMode | None = None,
    backend: Backend | str | None = AUTO,
    dense_threshold: int = DEFAULT_DENSE_THRESHOLD,
) -> GreedyTrace:
    """Greedy selection by explicit spread evaluation of every candidate.

    `plain` and `lazy` estimate spread by Monte Carlo, reusing `rng_seed`
    for every candidate so candidates share random numbers. `c1` and
    `lazy_c1` use the closed-form spread. Lazy variants keep stale gains in
    a max-heap and only refresh the top entry until it stays on top.

    """
    if variant not in MC_VARIANTS:
        raise UnknownMethodError('greedy variant', variant, MC_VARIANTS)
    check_budget(augmented, budget)

    started = perf_counter()
    evaluate = _spread_evaluator(
        augmented,
        variant,
        runs,
        horizon,
        rng_seed,
        threads,
        mode,
        backend,
        dense_threshold,
    )
    sigma = evaluate(SeedSet()) if augmented.bias_value else 0.0
    name = {
        PLAIN: 'greedy',
        LAZY: 'lazy_greedy',
        C1: 'c1greedy',
        LAZY_C1: 'lazy_c1greedy',
    }
    backend_name = 'mc' if variant in (PLAIN, LAZY) else str(
        resolve_backend(backend, augmented, dense_threshold)
    )
    trace = GreedyTrace(
        name[variant], backend_name, setup_seconds=perf_counter() - started
    )

    if variant in (PLAIN, C1):
        _plain_greedy(augmented, budget, evaluate, sigma, trace)
    else:
        _lazy_greedy(augmented, budget, evaluate, sigma, trace)
    return trace


def _plain_greedy(augmented, budget, evaluate, sigma, trace: GreedyTrace) -> None:
    seeds = SeedSet()
    for _ in range(budget):
        started = perf_counter()
        candidates = np.array(
            [node for node in range(augmented.n_raw) if node not in seeds]
        )
        values = np.array([evaluate(seeds.add(int(node))) for node in candidates])
        position = argmax_lowest_index(values - sigma)
        seed = int(candidates[position])
        gain = values[position] - sigma
        sigma = values[position]
        seeds = seeds.add(seed)
        trace.record(augmented, seed, gain, sigma, started, len(candidates))


def _lazy_greedy(augmented, budget, evaluate, sigma, trace: GreedyTrace) -> None:
    seeds = SeedSet()
    heap = []
    started = perf_counter()
    for node in range(augmented.n_raw):
        gain = evaluate(SeedSet.of(node)) - sigma
        heapq.heappush(heap, (-round(gain, RANKING_DECIMALS), node, 0, gain))
    evaluations = augmented.n_raw

    for step in range(budget):
        while True:
            _, node, stamp, gain = heapq.heappop(heap)
            if stamp == step:
                break
            gain = evaluate(seeds.add(node)) - sigma
            evaluations += 1
            heapq.heappush(heap, (-round(gain, RANKING_DECIMALS), node, step, gain))

        sigma += gain
        seeds = seeds.add(node)
        trace.record(augmented, node, gain, sigma, started, evaluations)
        started = perf_counter()
        evaluations = 0


def brute_force(
    augmented: AugmentedNetwork,
    budget: int,
    cap: int = DEFAULT_BRUTE_FORCE_CAP,
    threads: int = 1,
) -> tuple[SeedSet, float]:
    """Exhaustive search over all K-subsets in lexicographic order.

    A later subset replaces the incumbent only when it is better by more
    than the tie tolerance, so the lexicographically first optimum wins.

    """
    check_budget(augmented, budget)
    n_subsets = math.comb(augmented.n_raw, budget)
    if n_subsets > cap:
        raise CapacityExceededError(
            f'brute force over C({augmented.n_raw}, {budget}) = {n_subsets} subsets '
            f'exceeds the cap of {cap}; reduce K or the network size.'
        )

    if augmented.bias_value == 0:
        evaluate_chunk = ClosedFormSpread(augmented).sigma_batch
    else:

        def evaluate_chunk(subsets: np.ndarray) -> np.ndarray:
            return np.array(
                [
                    influence_spread(augmented, [int(node) for node in subset])
                    for subset in subsets
                ]
            )

    combinations = itertools.combinations(range(augmented.n_raw), budget)
    chunks = []
    while chunk := list(itertools.islice(combinations, BRUTE_FORCE_CHUNK)):
        chunks.append(np.array(chunk, dtype=np.int64))

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        chunk_sigmas = list(executor.map(evaluate_chunk, chunks))

    best_subset, best_sigma = None, -np.inf
    for subsets, sigmas in zip(chunks, chunk_sigmas):
        position = argmax_lowest_index(sigmas)
        threshold = best_sigma + TIE_TOLERANCE * max(1.0, abs(best_sigma))
        if sigmas[position] > threshold:
            best_subset, best_sigma = subsets[position], float(sigmas[position])

    logger.info('Brute force searched %d subsets of size %d', n_subsets, budget)
    return SeedSet(tuple(int(node) for node in best_subset)), best_sigma


def online_bound(
    augmented: AugmentedNetwork,
    trace: GreedyTrace | SeedSet | Iterable[int],
    backend: Backend | str | None = AUTO,
    dense_threshold: int = DEFAULT_DENSE_THRESHOLD,
) -> BoundReport:
    """Online and offline upper bounds on the optimal spread with K seeds.

    The online bound adds the K largest marginal gains at the selected set
    to its spread. The offline bound adds the K largest gains at the empty
    set to the spread of the empty set. Gains are closed-form.

    """
    seeds = trace.seed_set() if isinstance(trace, GreedyTrace) else as_seed_set(trace)
    budget = len(seeds)
    check_budget(augmented, budget)

    backend = resolve_backend(backend, augmented, dense_threshold)
    if backend.kind == DENSE and augmented.bias_value == 0:
        oracle = ClosedFormSpread(augmented)
        achieved = oracle.sigma(seeds)
        gains_at_seeds = oracle.marginal_gains(seeds)
        gains_at_empty = oracle.marginal_gains(SeedSet())
        empty_sigma = 0.0
    else:
        achieved = influence_spread(augmented, seeds, backend)
        gains_at_seeds = marginal_gains(augmented, seeds, backend)
        gains_at_empty = marginal_gains(augmented, SeedSet(), backend)
        empty_sigma = (
            steady_state(build_transition_system(augmented), augmented.bias_value).sigma
        )

    remaining = np.array([node for node in range(augmented.n_raw) if node not in seeds])
    online = achieved
    if len(remaining):
        online += float(np.sort(gains_at_seeds[remaining])[::-1][:budget].sum())
    offline = empty_sigma + float(np.sort(gains_at_empty)[::-1][:budget].sum())
    return BoundReport(online, offline, float(achieved))


def pagerank_scores(
    network: Network,
    damping: float = PAGERANK_DAMPING,
    tolerance: float = PAGERANK_TOLERANCE,
    max_iterations: int = PAGERANK_MAX_ITERATIONS,
) -> np.ndarray:
    """PageRank with rank flowing from each follower to the node it follows.

    Follower edges point against the direction influence travels, so this is
    PageRank on the reversed influence graph: widely followed nodes rank
    first. Dangling mass is spread uniformly. Iterates until the L1 change drops
    below `tolerance`.

    """
    n_nodes = network.n_raw
    following = network.normalized_weights()
    dangling = np.asarray(following.sum(axis=1)).ravel() == 0
    incoming = following.T.tocsr()

    scores = np.full(n_nodes, 1.0 / n_nodes)
    for iteration in range(max_iterations):
        updated = damping * (incoming @ scores)
        updated += (damping * scores[dangling].sum() + 1.0 - damping) / n_nodes
        change = np.abs(updated - scores).sum()
        scores = updated
        if change < tolerance:
            logger.debug('PageRank converged after %d iterations', iteration + 1)
            break
    return scores


def weighted_in_degree(network: Network) -> np.ndarray:
    """Trust each node receives: column sums of the row-normalized weights."""
    return np.asarray(network.normalized_weights().sum(axis=0)).ravel()


def baseline_select(
    augmented: AugmentedNetwork, budget: int, method: str, rng_seed: int | None = 0
) -> SeedSet:
    """Top-K weighted in-degree, top-K PageRank, or a uniform random K-subset."""
    check_budget(augmented, budget)
    if method == DEGREE:
        picked = top_k_lowest_index(weighted_in_degree(augmented.network), budget)
    elif method == PAGERANK:
        picked = top_k_lowest_index(pagerank_scores(augmented.network), budget)
    elif method == RANDOM:
        rng = np.random.default_rng(rng_seed)
        picked = rng.choice(augmented.n_raw, size=budget, replace=False)
    else:
        raise UnknownMethodError('baseline', method, BASELINES)
    return SeedSet(tuple(int(node) for node in picked))


def trace_from_seeds(
    augmented: AugmentedNetwork,
    seeds: SeedSet | Iterable[int],
    algorithm: str,
    backend: Backend | str | None = AUTO,
    dense_threshold: int = DEFAULT_DENSE_THRESHOLD,
    elapsed: float = 0.0,
) -> GreedyTrace:
    """Trace of a fixed seed order with closed-form prefix spreads."""
    seeds = as_seed_set(seeds)
    backend = resolve_backend(backend, augmented, dense_threshold)
    trace = GreedyTrace(algorithm, str(backend), setup_seconds=elapsed)

    if backend.kind == DENSE and augmented.bias_value == 0:
        oracle = ClosedFormSpread(augmented)

        def evaluate(prefix):
            return oracle.sigma(prefix)

    else:

        def evaluate(prefix):
            return influence_spread(augmented, prefix, backend)

    sigma = evaluate(SeedSet()) if augmented.bias_value else 0.0
    prefix = SeedSet()
    for seed in seeds:
        started = perf_counter()
        prefix = prefix.add(seed)
        sigma_after = evaluate(prefix)
        trace.record(augmented, seed, sigma_after - sigma, sigma_after, started, 1)
        sigma = sigma_after
    return trace
