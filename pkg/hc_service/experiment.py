"""Experiment orchestration and result persistence.

Every run builds the network, augments it with the bias node, runs each
configured selector for `k = 1..K`, and scores every seed prefix with the
exact closed-form spread. Results are staged in a hidden directory and only
moved into the output directory once everything has been written.

"""

from __future__ import annotations

import logging
import math
import shutil
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from time import perf_counter

from hc_influence.exceptions import CapacityExceededError, HeatConductionError
from hc_influence.generators import (
    KRONECKER_INITIATORS,
    ForestFireSpec,
    KroneckerSpec,
    generate_forest_fire,
    generate_kronecker,
)
from hc_influence.graph import (
    DEFAULT_BETA,
    AugmentedNetwork,
    Network,
    augment_with_bias,
    load_edge_list,
    write_label_table,
)
from hc_influence.maximize import (
    C1,
    LAZY,
    LAZY_C1,
    PLAIN,
    GreedyTrace,
    baseline_select,
    brute_force,
    c2greedy,
    mc_greedy,
    online_bound,
    trace_from_seeds,
)
from hc_influence.spread import (
    NEUMANN,
    Backend,
    ClosedFormSpread,
    effective_truncation,
    influence_spread,
    resolve_backend,
)
from hc_service.config import (
    FOREST_FIRE,
    MC_ALGORITHMS,
    ExperimentConfig,
    NetworkConfig,
)
from hc_service.exceptions import ExperimentServiceError, InvalidConfiguration
from hc_service.provenance import (
    PROVENANCE_FILE,
    append_provenance,
    create_provenance_record,
    get_semantic_version,
)
from hc_service.utilities import (
    load_beta_file,
    read_csv,
    resolve_threads,
    staged_outputs,
    write_csv,
)

logger = logging.getLogger(__name__)

RESULTS_FILE = 'results.csv'
TIMINGS_FILE = 'timings.csv'
LABELS_FILE = 'labels.tsv'

RESULT_FIELDS = [
    'algorithm',
    'k',
    'sigma',
    'evals',
    'bound_ratio',
    'truncation',
    'matches_reference',
]
TIMING_FIELDS = ['algorithm', 'k', 'truncation', 'elapsed_ms', 'evals']
TRACE_FIELDS = [
    'step',
    'seed',
    'label',
    'marginal_gain',
    'sigma',
    'elapsed_ms',
    'evals',
]

GREEDY_VARIANTS = {
    'greedy': PLAIN,
    'lazy_greedy': LAZY,
    'c1greedy': C1,
    'lazy_c1greedy': LAZY_C1,
}
DEFAULT_TRUNCATION_SWEEP = (0, 1, 2, 4, 8, 16)


def _optional(value, convert):
    return None if value in ('', None) else convert(value)


def _blank(value, convert=lambda value: value):
    return '' if value is None else convert(value)


@dataclass
class ResultRow:
    """One (algorithm, k) outcome. `elapsed` is cumulative seconds up to k."""

    algorithm: str
    k: int
    sigma: float
    evals: int
    elapsed: float = 0.0
    bound_ratio: float | None = None
    truncation: int | None = None
    matches_reference: bool | None = None

    def result_fields(self) -> dict:
        """Deterministic fields, floats written losslessly."""
        return {
            'algorithm': self.algorithm,
            'k': self.k,
            'sigma': repr(float(self.sigma)),
            'evals': self.evals,
            'bound_ratio': _blank(self.bound_ratio, lambda value: repr(float(value))),
            'truncation': _blank(self.truncation),
            'matches_reference': _blank(
                self.matches_reference, lambda value: str(value).lower()
            ),
        }

    def timing_fields(self) -> dict:
        """Wall-clock fields, kept apart from the deterministic results."""
        return {
            'algorithm': self.algorithm,
            'k': self.k,
            'truncation': _blank(self.truncation),
            'elapsed_ms': repr(self.elapsed * 1000.0),
            'evals': self.evals,
        }

    @classmethod
    def from_fields(cls, fields: dict, elapsed_ms: str | None = None) -> ResultRow:
        """Rebuild a row from CSV fields."""
        return cls(
            algorithm=fields['algorithm'],
            k=int(fields['k']),
            sigma=float(fields['sigma']),
            evals=int(fields['evals']),
            elapsed=float(elapsed_ms) / 1000.0 if elapsed_ms else 0.0,
            bound_ratio=_optional(fields['bound_ratio'], float),
            truncation=_optional(fields['truncation'], int),
            matches_reference=_optional(
                fields['matches_reference'], lambda value: value == 'true'
            ),
        )


@dataclass
class ResultTable:
    """Rows in run order plus the stamp that identifies the environment."""

    rows: list[ResultRow] = field(default_factory=list)
    stamp: dict = field(default_factory=dict)

    def write(self, directory: str | Path) -> None:
        """Write results.csv and timings.csv into `directory`."""
        directory = Path(directory)
        write_csv(
            directory / RESULTS_FILE,
            RESULT_FIELDS,
            (row.result_fields() for row in self.rows),
            self.stamp,
        )
        write_csv(
            directory / TIMINGS_FILE,
            TIMING_FIELDS,
            (row.timing_fields() for row in self.rows),
        )

    def sigmas(self, algorithm: str, truncation: int | None = None) -> list[float]:
        """Spread for k = 1..K of one algorithm."""
        return [
            row.sigma
            for row in self.rows
            if row.algorithm == algorithm and row.truncation == truncation
        ]


def read_result_table(directory: str | Path) -> ResultTable:
    """Parse results.csv (and timings.csv when present) back into a ResultTable."""
    directory = Path(directory)
    stamp, result_rows = read_csv(directory / RESULTS_FILE)
    elapsed = [None] * len(result_rows)
    if (directory / TIMINGS_FILE).is_file():
        _, timing_rows = read_csv(directory / TIMINGS_FILE)
        elapsed = [row['elapsed_ms'] for row in timing_rows]
    return ResultTable(
        [ResultRow.from_fields(row, ms) for row, ms in zip(result_rows, elapsed)], stamp
    )


@contextmanager
def stage(name: str):
    """Name the part of a run that raised a library error."""
    try:
        yield
    except HeatConductionError as error:
        logger.exception('Stage "%s" failed', name)
        raise ExperimentServiceError.from_library_error(error, name) from error


def describe_source(network_config: NetworkConfig) -> str:
    """Human-readable network source for provenance."""
    if network_config.edge_list is not None:
        return network_config.edge_list
    if network_config.generator == FOREST_FIRE:
        return (
            f'forestfire(n_target={network_config.n_target}, '
            f'p_forward={network_config.p_forward}, '
            f'p_backward={network_config.p_backward})'
        )
    return (
        f'kronecker(initiator={network_config.initiator}, '
        f'power={network_config.power})'
    )


def build_network(config: ExperimentConfig) -> Network:
    """Load or generate the network named by the configuration."""
    network_config = config.network
    beta = DEFAULT_BETA if isinstance(config.beta, str) else config.beta

    if network_config.edge_list is not None:
        network = load_edge_list(
            network_config.edge_list, network_config.weighting, config.rng_seed, beta
        )
    elif network_config.generator == FOREST_FIRE:
        network = generate_forest_fire(
            ForestFireSpec(
                network_config.n_target,
                network_config.p_forward,
                network_config.p_backward,
                config.rng_seed,
                beta,
            )
        )
    else:
        initiator = network_config.initiator
        if isinstance(initiator, str):
            initiator = KRONECKER_INITIATORS[initiator]
        network = generate_kronecker(
            KroneckerSpec(
                tuple(tuple(row) for row in initiator),
                network_config.power,
                config.rng_seed,
                beta,
            )
        )

    if isinstance(config.beta, str):
        network = network.with_beta(load_beta_file(config.beta, network.n_raw))
    return network


def build_augmented(config: ExperimentConfig) -> AugmentedNetwork:
    """Build the network and attach the bias node with value `b`."""
    with stage('load network'):
        return augment_with_bias(build_network(config), config.b)


def select_backend(config: ExperimentConfig, augmented: AugmentedNetwork) -> Backend:
    """Resolve the configured backend, truncation and samples."""
    with stage('select backend'):
        requested = config.backend
        if requested == NEUMANN:
            requested = Backend.neumann(config.truncation, config.neumann_samples)
        backend = resolve_backend(
            requested,
            augmented,
            config.dense_threshold,
            config.truncation,
            config.rng_seed,
        )
        if backend.kind == NEUMANN and backend.samples != config.neumann_samples:
            backend = Backend.neumann(backend.truncation, config.neumann_samples)
    logger.info('Selected %s backend', backend)
    return backend


def evaluate_prefixes(
    augmented: AugmentedNetwork, seeds: list[int], dense_threshold: int
) -> list[float]:
    """Exact spread of every prefix of `seeds`."""
    if augmented.bias_value == 0 and augmented.n_raw <= dense_threshold:
        oracle = ClosedFormSpread(augmented)
        return [oracle.sigma(seeds[: k + 1]) for k in range(len(seeds))]
    return [
        influence_spread(augmented, seeds[: k + 1], Backend.dense())
        for k in range(len(seeds))
    ]


def rescore_trace(
    augmented: AugmentedNetwork, trace: GreedyTrace, dense_threshold: int
) -> GreedyTrace:
    """Copy of `trace` whose spreads and gains come from `evaluate_prefixes`."""
    with stage('evaluate spread'):
        sigmas = evaluate_prefixes(augmented, trace.seeds, dense_threshold)
        previous = 0.0
        if augmented.bias_value != 0:
            previous = influence_spread(augmented, [], Backend.dense())
    steps = []
    for step, sigma in zip(trace.steps, sigmas):
        steps.append(
            replace(
                step,
                marginal_gain=float(sigma - previous),
                sigma_after=float(sigma),
            )
        )
        previous = sigma
    return replace(trace, steps=steps)


def run_algorithm(
    name: str,
    augmented: AugmentedNetwork,
    config: ExperimentConfig,
    backend: Backend,
) -> GreedyTrace:
    """Run one selector for budget K and return its trace."""
    threads = resolve_threads(config.threads)
    with stage(name):
        if name == 'c2greedy':
            return c2greedy(augmented, config.k, backend, config.dense_threshold)
        if name in GREEDY_VARIANTS:
            return mc_greedy(
                augmented,
                config.k,
                runs=config.mc_runs,
                variant=GREEDY_VARIANTS[name],
                horizon=config.mc_horizon,
                rng_seed=config.rng_seed,
                threads=threads,
                backend=backend,
                dense_threshold=config.dense_threshold,
            )

        started = perf_counter()
        seeds = baseline_select(augmented, config.k, name, config.rng_seed)
        return trace_from_seeds(
            augmented,
            seeds,
            name,
            backend,
            config.dense_threshold,
            elapsed=perf_counter() - started,
        )


def rows_from_trace(
    trace: GreedyTrace,
    sigmas: list[float],
    bound_ratio: float | None = None,
    truncation: int | None = None,
    reference: list[int] | None = None,
    algorithm: str | None = None,
) -> list[ResultRow]:
    """One row per prefix; `bound_ratio` goes on the final row."""
    rows = []
    evals, elapsed = 0, trace.setup_seconds
    for k, (step, sigma) in enumerate(zip(trace.steps, sigmas), start=1):
        evals += step.evaluations
        elapsed += step.elapsed
        matches = None
        if reference is not None:
            matches = set(trace.seeds[:k]) == set(reference[:k])
        rows.append(
            ResultRow(
                algorithm=algorithm or trace.algorithm,
                k=k,
                sigma=sigma,
                evals=evals,
                elapsed=elapsed,
                bound_ratio=bound_ratio if k == len(trace.steps) else None,
                truncation=truncation,
                matches_reference=matches,
            )
        )
    return rows


def _brute_force_rows(
    augmented: AugmentedNetwork, config: ExperimentConfig
) -> list[ResultRow]:
    rows = []
    threads = resolve_threads(config.threads)
    for k in range(1, config.k + 1):
        with stage('brute'):
            started = perf_counter()
            seeds, _ = brute_force(augmented, k, config.brute_force_cap, threads)
            elapsed = perf_counter() - started
            sigmas = evaluate_prefixes(augmented, list(seeds), config.dense_threshold)
            sigma = sigmas[-1]
        rows.append(
            ResultRow('brute', k, sigma, math.comb(augmented.n_raw, k), elapsed)
        )
    return rows


def _stamp(config: ExperimentConfig, backend: Backend) -> dict:
    return {
        'version': get_semantic_version(),
        'rng_seed': config.rng_seed,
        'backend': str(backend),
    }


def _run_algorithms(
    config: ExperimentConfig, augmented: AugmentedNetwork, backend: Backend
) -> list[ResultRow]:
    rows = []
    for name in config.algorithms:
        if name == 'brute':
            rows.extend(_brute_force_rows(augmented, config))
            continue

        trace = run_algorithm(name, augmented, config, backend)
        with stage('evaluate spread'):
            sigmas = evaluate_prefixes(augmented, trace.seeds, config.dense_threshold)
        bound_ratio = None
        if config.compute_bounds:
            with stage('bounds'):
                bound_ratio = online_bound(
                    augmented, trace, backend, config.dense_threshold
                ).ratio
        rows.extend(rows_from_trace(trace, sigmas, bound_ratio))
        logger.info('%s selected %s, sigma %.6f', name, trace.seeds, sigmas[-1])
    return rows


def write_outputs(
    config: ExperimentConfig,
    augmented: AugmentedNetwork,
    table: ResultTable,
    command: str,
) -> None:
    """Atomically write results, timings, labels and provenance."""
    output_directory = Path(config.output_directory)
    with stage('write results'), staged_outputs(output_directory) as staging:
        table.write(staging)
        write_label_table(augmented.network, staging / LABELS_FILE)
        if (output_directory / PROVENANCE_FILE).is_file():
            shutil.copy(output_directory / PROVENANCE_FILE, staging / PROVENANCE_FILE)
        append_provenance(
            staging,
            create_provenance_record(
                describe_source(config.network), config.to_json(), command
            ),
        )
    logger.info('Wrote %d result rows to %s', len(table.rows), output_directory)


def run_experiment(config: ExperimentConfig, write: bool = True) -> ResultTable:
    """Run every configured algorithm for k = 1..K and persist the results."""
    augmented = build_augmented(config)
    if config.k > augmented.n_raw:
        raise InvalidConfiguration(
            f'k={config.k} exceeds the {augmented.n_raw} nodes.'
        )
    backend = select_backend(config, augmented)

    rows = _run_algorithms(config, augmented, backend)
    table = ResultTable(rows, _stamp(config, backend))
    if write:
        write_outputs(config, augmented, table, 'experiment')
    return table


def compare_backends(config: ExperimentConfig, write: bool = True) -> ResultTable:
    """Run C2Greedy with the dense backend and with Neumann for each T in a sweep.

    Rows for the dense run have an empty truncation. Every Neumann row
    records whether its seed prefix equals the dense prefix as a set. The
    sweep always includes the configured truncation, or the estimated
    effective diameter when it is `auto`; the stamp records that value.

    """
    augmented = build_augmented(config)
    if augmented.n_raw > config.dense_threshold:
        raise ExperimentServiceError.from_library_error(
            CapacityExceededError(
                f'{augmented.n_raw} nodes exceed dense_threshold='
                f'{config.dense_threshold}; the dense reference is unavailable.'
            ),
            'compare backends',
        )

    with stage('c2greedy'):
        reference = c2greedy(augmented, config.k, Backend.dense())
        sigmas = evaluate_prefixes(augmented, reference.seeds, config.dense_threshold)
    rows = rows_from_trace(reference, sigmas, reference=reference.seeds)

    diameter_truncation = config.truncation
    if diameter_truncation is None:
        with stage('effective diameter'):
            diameter_truncation = effective_truncation(augmented, config.rng_seed)
    sweep = sorted(
        {*(config.truncation_sweep or DEFAULT_TRUNCATION_SWEEP), diameter_truncation}
    )
    for truncation in sweep:
        with stage(f'c2greedy neumann:{truncation}'):
            trace = c2greedy(
                augmented, config.k, Backend.neumann(truncation, config.neumann_samples)
            )
            sigmas = evaluate_prefixes(augmented, trace.seeds, config.dense_threshold)
        rows.extend(
            rows_from_trace(
                trace, sigmas, truncation=truncation, reference=reference.seeds
            )
        )
        logger.info(
            'T=%d matches dense seeds: %s', truncation, rows[-1].matches_reference
        )

    stamp = _stamp(config, Backend.dense())
    stamp['diameter_truncation'] = diameter_truncation
    table = ResultTable(rows, stamp)
    if write:
        write_outputs(config, augmented, table, 'compare-backends')
    return table


def timing_harness(config: ExperimentConfig, write: bool = True) -> ResultTable:
    """Compare wall-clock time and evaluation counts across greedy variants.

    The configuration must include c2greedy and at least one Monte Carlo
    greedy variant. Bounds are skipped so that rows only time selection.

    """
    if 'c2greedy' not in config.algorithms or not any(
        name in MC_ALGORITHMS for name in config.algorithms
    ):
        raise InvalidConfiguration(
            'timing needs c2greedy and one of ' + ', '.join(MC_ALGORITHMS) + '.'
        )

    augmented = build_augmented(config)
    backend = select_backend(config, augmented)
    timed = replace(config, compute_bounds=False)
    rows = _run_algorithms(timed, augmented, backend)
    table = ResultTable(rows, _stamp(config, backend))

    totals = {
        row.algorithm: row.elapsed for row in table.rows if row.k == config.k
    }
    logger.info('Total selection seconds per algorithm: %s', totals)
    if write:
        write_outputs(config, augmented, table, 'timing')
    return table


def write_trace(trace: GreedyTrace, file_path: str | Path) -> None:
    """Write a per-step trace CSV."""
    rows = [
        {
            'step': index,
            'seed': step.seed,
            'label': step.label,
            'marginal_gain': repr(step.marginal_gain),
            'sigma': repr(step.sigma_after),
            'elapsed_ms': repr(step.elapsed * 1000.0),
            'evals': step.evaluations,
        }
        for index, step in enumerate(trace.steps, start=1)
    ]
    comments = {'algorithm': trace.algorithm, 'backend': trace.backend}
    write_csv(file_path, TRACE_FIELDS, rows, comments)
