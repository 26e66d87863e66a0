"""Parse and validate the JSON experiment configuration.

A configuration is one JSON document whose keys mirror `ExperimentConfig`.
Unknown keys at any level are rejected so that typos in a sweep fail before
any computation starts.

"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from hc_influence.generators import KRONECKER_INITIATORS
from hc_influence.graph import DEFAULT_BETA, WEIGHTING_SCHEMES
from hc_influence.maximize import DEFAULT_BRUTE_FORCE_CAP
from hc_influence.spread import DEFAULT_DENSE_THRESHOLD
from hc_service.exceptions import InvalidConfiguration

KRONECKER = 'kronecker'
FOREST_FIRE = 'forestfire'
GENERATORS = (KRONECKER, FOREST_FIRE)

ALGORITHMS = (
    'c2greedy',
    'greedy',
    'lazy_greedy',
    'c1greedy',
    'lazy_c1greedy',
    'brute',
    'degree',
    'pagerank',
    'random',
)
MC_ALGORITHMS = ('greedy', 'lazy_greedy')
BACKENDS = ('auto', 'dense', 'neumann')
AUTO = 'auto'


@dataclass(frozen=True)
class NetworkConfig:
    """Exactly one network source: a generator or an edge-list file."""

    generator: str | None = None
    edge_list: str | None = None
    weighting: str = 'explicit'
    initiator: str | list[list[float]] | None = None
    power: int | None = None
    n_target: int | None = None
    p_forward: float = 0.35
    p_backward: float = 0.25


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment run."""

    network: NetworkConfig
    k: int
    beta: float | str = DEFAULT_BETA
    b: float = 0.0
    backend: str = AUTO
    truncation: int | None = None
    dense_threshold: int = DEFAULT_DENSE_THRESHOLD
    neumann_samples: int | None = None
    algorithms: tuple[str, ...] = ('c2greedy',)
    mc_runs: int = 1000
    mc_horizon: int | None = None
    rng_seed: int = 0
    output_directory: str = 'results'
    brute_force_cap: int = DEFAULT_BRUTE_FORCE_CAP
    truncation_sweep: tuple[int, ...] = field(default_factory=tuple)
    compute_bounds: bool = True
    threads: int = 1

    def with_overrides(
        self,
        output_directory: str | None = None,
        rng_seed: int | None = None,
        threads: int | None = None,
    ) -> ExperimentConfig:
        """Apply command-line overrides; `None` keeps the document value."""
        overrides = {
            'output_directory': output_directory,
            'rng_seed': rng_seed,
            'threads': threads,
        }
        kept = {key: value for key, value in overrides.items() if value is not None}
        return replace(self, **kept)

    def to_json(self) -> dict:
        """A JSON-serializable dictionary of the configuration."""
        document = asdict(self)
        document['algorithms'] = list(self.algorithms)
        document['truncation_sweep'] = list(self.truncation_sweep)
        return document


def _check_keys(document: dict, allowed: set[str], where: str) -> None:
    if not isinstance(document, dict):
        raise InvalidConfiguration(f'{where} must be a JSON object.')
    unknown = sorted(set(document) - allowed)
    if unknown:
        raise InvalidConfiguration(f'unknown keys in {where}: {", ".join(unknown)}.')


def _typed(document: dict, key: str, types, default=None, where: str = 'configuration'):
    value = document.get(key, default)
    # bool is an int subclass; only accept it where bool is asked for.
    if isinstance(value, bool) and bool not in types:
        raise InvalidConfiguration(f'{where}.{key} must not be a boolean.')
    if value is not None and not isinstance(value, types):
        raise InvalidConfiguration(f'{where}.{key} has the wrong type: {value!r}.')
    return value


def _auto_or_int(document: dict, key: str) -> int | None:
    value = document.get(key, AUTO)
    if value == AUTO or value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise InvalidConfiguration(f'{key} must be "auto" or an integer >= 0.')
    return value


def parse_network(document: dict) -> NetworkConfig:
    """Validate the `network` section."""
    where = 'network'
    _check_keys(
        document,
        {field_name for field_name in NetworkConfig.__dataclass_fields__},
        where,
    )
    network = NetworkConfig(
        generator=_typed(document, 'generator', (str,), where=where),
        edge_list=_typed(document, 'edge_list', (str,), where=where),
        weighting=_typed(document, 'weighting', (str,), 'explicit', where),
        initiator=_typed(document, 'initiator', (str, list), where=where),
        power=_typed(document, 'power', (int,), where=where),
        n_target=_typed(document, 'n_target', (int,), where=where),
        p_forward=float(_typed(document, 'p_forward', (int, float), 0.35, where)),
        p_backward=float(_typed(document, 'p_backward', (int, float), 0.25, where)),
    )

    if (network.generator is None) == (network.edge_list is None):
        raise InvalidConfiguration(
            'network needs exactly one of generator or edge_list.'
        )
    if network.edge_list is not None:
        if not Path(network.edge_list).is_file():
            raise InvalidConfiguration(f'edge list {network.edge_list} does not exist.')
        if network.weighting not in WEIGHTING_SCHEMES:
            raise InvalidConfiguration(f'unknown weighting {network.weighting}.')
    elif network.generator == KRONECKER:
        if network.power is None or network.initiator is None:
            raise InvalidConfiguration('kronecker networks need initiator and power.')
        named = isinstance(network.initiator, str)
        if named and network.initiator not in KRONECKER_INITIATORS:
            raise InvalidConfiguration(f'unknown initiator {network.initiator}.')
    elif network.generator == FOREST_FIRE:
        if network.n_target is None:
            raise InvalidConfiguration('forestfire networks need n_target.')
    else:
        raise InvalidConfiguration(
            f'unknown generator {network.generator}; expected one of '
            f'{", ".join(GENERATORS)}.'
        )
    return network


def parse_config(document: dict) -> ExperimentConfig:
    """Validate a configuration document and build an ExperimentConfig."""
    _check_keys(document, set(ExperimentConfig.__dataclass_fields__), 'configuration')
    if 'network' not in document or 'k' not in document:
        raise InvalidConfiguration('network and k are required.')

    beta = _typed(document, 'beta', (int, float, str), DEFAULT_BETA)
    if isinstance(beta, str) and not Path(beta).is_file():
        raise InvalidConfiguration(f'beta file {beta} does not exist.')

    algorithms = tuple(_typed(document, 'algorithms', (list,), ['c2greedy']))
    unknown = [name for name in algorithms if name not in ALGORITHMS]
    if unknown or not algorithms:
        raise InvalidConfiguration(
            f'unknown algorithms {unknown}; expected some of {", ".join(ALGORITHMS)}.'
        )

    backend = _typed(document, 'backend', (str,), AUTO)
    if backend not in BACKENDS:
        raise InvalidConfiguration(f'backend must be one of {", ".join(BACKENDS)}.')

    sweep = _typed(document, 'truncation_sweep', (list,), [])
    if any(
        isinstance(value, bool) or not isinstance(value, int) or value < 0
        for value in sweep
    ):
        raise InvalidConfiguration('truncation_sweep must list integers >= 0.')

    config = ExperimentConfig(
        network=parse_network(document['network']),
        k=_typed(document, 'k', (int,)),
        beta=beta if isinstance(beta, str) else float(beta),
        b=float(_typed(document, 'b', (int, float), 0.0)),
        backend=backend,
        truncation=_auto_or_int(document, 'truncation'),
        dense_threshold=_typed(
            document, 'dense_threshold', (int,), DEFAULT_DENSE_THRESHOLD
        ),
        neumann_samples=_typed(document, 'neumann_samples', (int,)),
        algorithms=algorithms,
        mc_runs=_typed(document, 'mc_runs', (int,), 1000),
        mc_horizon=_auto_or_int(document, 'mc_horizon'),
        rng_seed=_typed(document, 'rng_seed', (int,), 0),
        output_directory=_typed(document, 'output_directory', (str,), 'results'),
        brute_force_cap=_typed(
            document, 'brute_force_cap', (int,), DEFAULT_BRUTE_FORCE_CAP
        ),
        truncation_sweep=tuple(sweep),
        compute_bounds=_typed(document, 'compute_bounds', (bool,), True),
        threads=_typed(document, 'threads', (int,), 1),
    )

    if config.k is None or config.k < 1:
        raise InvalidConfiguration('k must be >= 1.')
    if not 0 <= config.b <= 1:
        raise InvalidConfiguration('b must lie in [0, 1].')
    if config.mc_runs < 1:
        raise InvalidConfiguration('mc_runs must be >= 1.')
    if config.threads < 0:
        raise InvalidConfiguration('threads must be >= 0.')
    if config.neumann_samples is not None and config.neumann_samples < 1:
        raise InvalidConfiguration('neumann_samples must be >= 1 or null.')
    return config


def load_config(file_path: str | Path) -> ExperimentConfig:
    """Read and validate a configuration file."""
    try:
        with open(file_path, encoding='utf-8') as file_handler:
            document = json.load(file_handler)
    except FileNotFoundError as error:
        raise InvalidConfiguration(f'{file_path} does not exist.') from error
    except json.JSONDecodeError as error:
        raise InvalidConfiguration(f'{file_path} is not valid JSON: {error}') from error
    return parse_config(document)
