"""Run Heat Conduction influence experiments from the command line."""

import logging
import sys
from argparse import ArgumentParser, Namespace
from dataclasses import replace
from sys import argv

from hc_influence.exceptions import HeatConductionError
from hc_influence.generators import (
    KRONECKER_INITIATORS,
    ForestFireSpec,
    KroneckerSpec,
    generate_forest_fire,
    generate_kronecker,
)
from hc_influence.graph import (
    DEFAULT_BETA,
    WEIGHTING_SCHEMES,
    AugmentedNetwork,
    write_edge_list,
)
from hc_influence.maximize import brute_force, online_bound, trace_from_seeds
from hc_influence.simulate import (
    ModelMode,
    augment_for_mode,
    default_horizon,
    mc_spread_estimate,
    mc_trajectory,
)
from hc_influence.spread import NEUMANN, Backend
from hc_service.config import (
    ALGORITHMS,
    AUTO,
    ExperimentConfig,
    NetworkConfig,
    load_config,
)
from hc_service.exceptions import (
    EXIT_CODES,
    EXIT_SUCCESS,
    SERVICE_NAME,
    ExperimentServiceError,
    InvalidConfiguration,
)
from hc_service.experiment import (
    build_network,
    compare_backends,
    rescore_trace,
    run_algorithm,
    run_experiment,
    select_backend,
    timing_harness,
    write_trace,
)
from hc_service.utilities import resolve_threads, write_csv

logger = logging.getLogger(SERVICE_NAME)

TRACE_FILE = 'trace.csv'
TRAJECTORY_FILE = 'trajectory.csv'


def _add_common_arguments(parser: ArgumentParser) -> None:
    parser.add_argument('--config', help='Experiment configuration JSON file.')
    parser.add_argument('--out', help='Output directory or file.')
    parser.add_argument('--threads', type=int, help='Worker threads, 0 = one per CPU.')
    parser.add_argument('--seed', type=int, help='Master random seed.')
    parser.add_argument('--verbose', action='store_true', help='Log at DEBUG level.')


def _add_network_arguments(parser: ArgumentParser) -> None:
    parser.add_argument('--edge-list', help='Edge-list file, used without --config.')
    parser.add_argument('--weighting', choices=WEIGHTING_SCHEMES, default='explicit')
    parser.add_argument('--beta', type=float, default=DEFAULT_BETA)
    parser.add_argument('--b', type=float, default=0.0, help='Bias node value.')


def build_parser() -> ArgumentParser:
    """Command-line parser with one subcommand per operation."""
    parser = ArgumentParser(
        prog=SERVICE_NAME, description='Heat Conduction influence maximization.'
    )
    subparsers = parser.add_subparsers(dest='command', required=True)

    generate = subparsers.add_parser('generate', help='Write a synthetic network.')
    _add_common_arguments(generate)
    generate.add_argument('--model', choices=('kronecker', 'forestfire'), required=True)
    generate.add_argument(
        '--initiator',
        default='random',
        help='Named initiator or four comma-separated entries a,b,c,d.',
    )
    generate.add_argument('--power', type=int, default=10)
    generate.add_argument('--n-target', type=int, default=1000)
    generate.add_argument('--p-forward', type=float, default=0.35)
    generate.add_argument('--p-backward', type=float, default=0.25)

    simulate = subparsers.add_parser(
        'simulate', help='Monte Carlo spread of a seed set.'
    )
    _add_common_arguments(simulate)
    _add_network_arguments(simulate)
    simulate.add_argument(
        '--mode',
        default='hc',
        help='hc, hc_general[:m,r], voter, nlt or glt_binary:beta.',
    )
    simulate.add_argument(
        '--seeds', required=True, help='Comma-separated node indices.'
    )
    simulate.add_argument(
        '--horizon', type=int, help='Steps; default 10x effective diameter.'
    )
    simulate.add_argument('--runs', type=int, default=1000)
    simulate.add_argument(
        '--trajectory', action='store_true', help='Write t, mean_active, stderr.'
    )

    maximize = subparsers.add_parser('maximize', help='Select K seeds.')
    _add_common_arguments(maximize)
    _add_network_arguments(maximize)
    maximize.add_argument('--algo', choices=ALGORITHMS, default='c2greedy')
    maximize.add_argument('--k', type=int, required=True)
    maximize.add_argument('--backend', help='dense, neumann:T or auto (default).')
    maximize.add_argument('--runs', type=int, help='Monte Carlo runs, default 1000.')

    for name, description in (
        ('experiment', 'Run every configured algorithm.'),
        ('compare-backends', 'Compare dense and Neumann C2Greedy.'),
        ('timing', 'Time greedy variants.'),
    ):
        experiment = subparsers.add_parser(name, help=description)
        _add_common_arguments(experiment)

    return parser


def _load_config(arguments: Namespace) -> ExperimentConfig:
    if arguments.config is None:
        raise InvalidConfiguration(f'{arguments.command} requires --config.')
    return load_config(arguments.config).with_overrides(
        arguments.out, arguments.seed, arguments.threads
    )


def _config_from_arguments(arguments: Namespace, **fields) -> ExperimentConfig:
    """Configuration for simulate and maximize, from --config or flags.

    `fields` are set on top of a --config document as well.

    """
    if arguments.config is not None:
        config = load_config(arguments.config).with_overrides(
            None, arguments.seed, arguments.threads
        )
        return replace(config, **fields)
    if arguments.edge_list is None:
        raise InvalidConfiguration('pass --config or --edge-list.')
    return ExperimentConfig(
        network=NetworkConfig(
            edge_list=arguments.edge_list, weighting=arguments.weighting
        ),
        beta=arguments.beta,
        b=arguments.b,
        rng_seed=0 if arguments.seed is None else arguments.seed,
        threads=1 if arguments.threads is None else arguments.threads,
        **fields,
    )


def _parse_initiator(text: str) -> tuple:
    if text in KRONECKER_INITIATORS:
        return KRONECKER_INITIATORS[text]
    try:
        a, b, c, d = (float(value) for value in text.split(','))
    except ValueError as error:
        raise InvalidConfiguration(f'cannot parse initiator "{text}".') from error
    return ((a, b), (c, d))


def run_generate(arguments: Namespace) -> None:
    """Generate a network and write it as an edge list."""
    if arguments.out is None:
        raise InvalidConfiguration('generate requires --out <edge-list path>.')
    if arguments.model == 'kronecker':
        initiator = _parse_initiator(arguments.initiator)
        network = generate_kronecker(
            KroneckerSpec(initiator, arguments.power, arguments.seed)
        )
    else:
        network = generate_forest_fire(
            ForestFireSpec(
                arguments.n_target,
                arguments.p_forward,
                arguments.p_backward,
                arguments.seed,
            )
        )
    write_edge_list(network, arguments.out)


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(value) for value in text.split(',') if value.strip()]
    except ValueError as error:
        raise InvalidConfiguration(f'cannot parse seeds "{text}".') from error


def run_simulate(arguments: Namespace) -> None:
    """Estimate the spread of a seed set by Monte Carlo simulation."""
    config = _config_from_arguments(arguments)
    mode = ModelMode.parse(arguments.mode)
    network = build_network(config)
    augmented = augment_for_mode(network, mode, config.b)
    seeds = _parse_seeds(arguments.seeds)
    horizon = arguments.horizon or config.mc_horizon or default_horizon(network)
    threads = resolve_threads(config.threads)

    if arguments.trajectory:
        summary = mc_trajectory(
            augmented,
            seeds,
            mode,
            horizon,
            arguments.runs,
            config.rng_seed,
            threads=threads,
        )
        rows = [
            {'t': t, 'mean_active': repr(float(mean)), 'stderr': repr(float(error))}
            for t, (mean, error) in enumerate(zip(summary.mean, summary.stderr))
        ]
        write_csv(
            arguments.out or TRAJECTORY_FILE, ['t', 'mean_active', 'stderr'], rows
        )
        return

    mean, stderr = mc_spread_estimate(
        augmented,
        seeds,
        mode,
        horizon,
        arguments.runs,
        config.rng_seed,
        threads=threads,
    )
    print(f'sigma={mean!r} stderr={stderr!r} horizon={horizon} runs={arguments.runs}')


def _run_selector(arguments, config: ExperimentConfig, augmented: AugmentedNetwork):
    if arguments.algo != 'brute':
        backend = select_backend(config, augmented)
        return run_algorithm(arguments.algo, augmented, config, backend)
    seeds, _ = brute_force(
        augmented, arguments.k, config.brute_force_cap, resolve_threads(config.threads)
    )
    return trace_from_seeds(augmented, seeds, 'brute', 'dense', config.dense_threshold)


def _parse_backend(text: str) -> dict:
    """Configuration fields for `auto`, `dense`, `neumann` or `neumann:T`."""
    try:
        backend = Backend.parse(text)
    except (ValueError, HeatConductionError) as error:
        raise InvalidConfiguration(
            f'cannot parse backend "{text}"; expected auto, dense or neumann:T.'
        ) from error
    if isinstance(backend, str):
        return {'backend': AUTO}
    if backend.kind == NEUMANN:
        return {'backend': NEUMANN, 'truncation': backend.truncation}
    return {'backend': 'dense'}


def run_maximize(arguments: Namespace) -> None:
    """Select K seeds and write the per-step trace, scored exactly."""
    fields = {'k': arguments.k}
    if arguments.backend is not None:
        fields.update(_parse_backend(arguments.backend))
    if arguments.runs is not None:
        if arguments.runs < 1:
            raise InvalidConfiguration('--runs must be >= 1.')
        fields['mc_runs'] = arguments.runs
    config = _config_from_arguments(arguments, **fields)
    network = build_network(config)
    augmented = augment_for_mode(network, ModelMode(), config.b)
    trace = rescore_trace(
        augmented,
        _run_selector(arguments, config, augmented),
        config.dense_threshold,
    )

    if config.compute_bounds and config.b == 0:
        report = online_bound(augmented, trace, dense_threshold=config.dense_threshold)
        logger.info(
            'Online bound %.6f, offline bound %.6f, ratio %.4f',
            report.online_bound,
            report.offline_bound,
            report.ratio,
        )
    write_trace(trace, arguments.out or TRACE_FILE)


COMMANDS = {
    'generate': run_generate,
    'simulate': run_simulate,
    'maximize': run_maximize,
    'experiment': lambda arguments: run_experiment(_load_config(arguments)),
    'compare-backends': lambda arguments: compare_backends(_load_config(arguments)),
    'timing': lambda arguments: timing_harness(_load_config(arguments)),
}


def main(arguments: list[str]) -> int:
    """Parse command line arguments and invoke the appropriate method."""
    parser = build_parser()
    parsed = parser.parse_args(arguments[1:])
    logging.basicConfig(
        level=logging.DEBUG if parsed.verbose else logging.INFO,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )

    try:
        COMMANDS[parsed.command](parsed)
    except ExperimentServiceError as error:
        logger.error(error.message)
        return error.exit_code
    except HeatConductionError as error:
        logger.error(error.message)
        return EXIT_CODES[error.category]

    return EXIT_SUCCESS


if __name__ == '__main__':
    sys.exit(main(argv))
