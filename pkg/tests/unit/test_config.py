"""Tests for hc_service.config.py."""

import json
from os.path import join as path_join

import pytest

from hc_service.config import (
    ExperimentConfig,
    NetworkConfig,
    load_config,
    parse_config,
    parse_network,
)
from hc_service.exceptions import InvalidConfiguration


@pytest.fixture(name='document')
def fixture_document(two_node_edge_list) -> dict:
    """A minimal valid configuration document."""
    return {'network': {'edge_list': two_node_edge_list}, 'k': 2}


def test_parse_config_defaults(document, two_node_edge_list):
    """Omitted keys take their documented defaults."""
    config = parse_config(document)

    assert config.network == NetworkConfig(edge_list=two_node_edge_list)
    assert config.k == 2
    assert config.beta == 0.1
    assert config.b == 0.0
    assert config.backend == 'auto'
    assert config.truncation is None
    assert config.algorithms == ('c2greedy',)
    assert config.compute_bounds is True


def test_parse_config_full(document):
    """Every recognised key is carried over."""
    document.update(
        {
            'beta': 0.2,
            'b': 0.5,
            'backend': 'neumann',
            'truncation': 6,
            'neumann_samples': 32,
            'algorithms': ['c2greedy', 'degree'],
            'mc_runs': 50,
            'mc_horizon': 'auto',
            'rng_seed': 9,
            'truncation_sweep': [0, 4],
            'compute_bounds': False,
            'threads': 0,
        }
    )

    config = parse_config(document)

    assert config.beta == 0.2
    assert config.b == 0.5
    assert config.truncation == 6
    assert config.neumann_samples == 32
    assert config.algorithms == ('c2greedy', 'degree')
    assert config.mc_horizon is None
    assert config.truncation_sweep == (0, 4)
    assert config.threads == 0


@pytest.mark.parametrize(
    'update',
    [
        {'unexpected': 1},
        {'k': 0},
        {'k': True},
        {'k': None},
        {'k': 1.5},
        {'b': 1.5},
        {'backend': 'gpu'},
        {'algorithms': ['c2greedy', 'celf']},
        {'algorithms': []},
        {'truncation': -1},
        {'truncation_sweep': [2, -1]},
        {'mc_runs': 0},
        {'threads': -1},
        {'neumann_samples': 0},
        {'beta': 'missing_beta_file.txt'},
        {'compute_bounds': 'yes'},
    ],
)
def test_parse_config_invalid(document, update):
    """Invalid values and unknown keys are configuration errors."""
    document.update(update)

    with pytest.raises(InvalidConfiguration) as error:
        parse_config(document)

    assert error.value.exit_code == 2


def test_parse_config_requires_network_and_k():
    """Both network and k must be present."""
    with pytest.raises(InvalidConfiguration):
        parse_config({'k': 2})


@pytest.mark.parametrize(
    'network',
    [
        {},
        {'generator': 'kronecker', 'edge_list': 'edges.tsv'},
        {'generator': 'kronecker', 'power': 4},
        {'generator': 'kronecker', 'initiator': 'fractal', 'power': 4},
        {'generator': 'forestfire'},
        {'generator': 'erdos_renyi'},
        {'edge_list': 'does_not_exist.tsv'},
        {'generator': 'forestfire', 'n_target': 10, 'colour': 'red'},
    ],
)
def test_parse_network_invalid(network):
    """A network needs exactly one complete source."""
    with pytest.raises(InvalidConfiguration):
        parse_network(network)


def test_parse_network_generators():
    """Named and explicit Kronecker initiators and forest fire are accepted."""
    named = parse_network({'generator': 'kronecker', 'initiator': 'random', 'power': 5})
    explicit = parse_network(
        {'generator': 'kronecker', 'initiator': [[0.9, 0.5], [0.5, 0.3]], 'power': 5}
    )
    forest_fire = parse_network({'generator': 'forestfire', 'n_target': 100})

    assert named.initiator == 'random'
    assert explicit.initiator == [[0.9, 0.5], [0.5, 0.3]]
    assert forest_fire.p_forward == 0.35
    assert forest_fire.p_backward == 0.25


def test_with_overrides(document):
    """Command-line values replace document values unless they are None."""
    config = parse_config(document)

    overridden = config.with_overrides('elsewhere', None, 4)

    assert overridden.output_directory == 'elsewhere'
    assert overridden.rng_seed == config.rng_seed
    assert overridden.threads == 4


def test_to_json_round_trip(document):
    """The JSON form parses back to the same configuration."""
    document['algorithms'] = ['c2greedy', 'random']
    document['truncation_sweep'] = [1, 2]
    config = parse_config(document)

    serialized = json.loads(json.dumps(config.to_json()))

    assert serialized['algorithms'] == ['c2greedy', 'random']
    assert serialized['network']['edge_list'] == config.network.edge_list
    reparsed = parse_config(
        {key: value for key, value in serialized.items() if value is not None}
    )
    assert reparsed == config


def test_load_config(temp_dir, document):
    """A configuration file is read and validated."""
    file_path = path_join(temp_dir, 'config.json')
    with open(file_path, 'w', encoding='utf-8') as file_handler:
        json.dump(document, file_handler)

    assert load_config(file_path) == parse_config(document)


def test_load_config_errors(temp_dir):
    """Missing files and malformed JSON are configuration errors."""
    file_path = path_join(temp_dir, 'broken.json')
    with open(file_path, 'w', encoding='utf-8') as file_handler:
        file_handler.write('{"k": 2,')

    with pytest.raises(InvalidConfiguration, match='not valid JSON'):
        load_config(file_path)

    with pytest.raises(InvalidConfiguration, match='does not exist'):
        load_config(path_join(temp_dir, 'missing.json'))


def test_experiment_config_is_frozen(document):
    """Configurations cannot be mutated after parsing."""
    config = parse_config(document)

    with pytest.raises(AttributeError):
        config.k = 3

    assert isinstance(config, ExperimentConfig)
