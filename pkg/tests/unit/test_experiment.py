"""Tests for hc_service.experiment.py."""

import csv
from dataclasses import replace
from os import listdir
from os.path import isdir
from os.path import join as path_join

import numpy as np
import pytest

from hc_influence.graph import augment_with_bias
from hc_influence.maximize import c2greedy, mc_greedy
from hc_influence.spread import Backend, influence_spread
from hc_service.config import ExperimentConfig, NetworkConfig
from hc_service.exceptions import ExperimentServiceError, InvalidConfiguration
from hc_service.experiment import (
    LABELS_FILE,
    RESULT_FIELDS,
    RESULTS_FILE,
    TIMINGS_FILE,
    build_network,
    compare_backends,
    describe_source,
    read_result_table,
    rescore_trace,
    run_experiment,
    select_backend,
    timing_harness,
    write_trace,
)
from hc_service.provenance import PROVENANCE_FILE, read_provenance
from hc_service.utilities import read_csv


@pytest.fixture(name='config')
def fixture_config(two_node_edge_list, temp_dir) -> ExperimentConfig:
    """Two-node experiment with K = 2 writing into a fresh directory."""
    return ExperimentConfig(
        network=NetworkConfig(edge_list=two_node_edge_list),
        k=2,
        output_directory=path_join(temp_dir, 'out'),
    )


def _read(file_path):
    with open(file_path, encoding='utf-8') as file_handler:
        return file_handler.read()


def test_run_experiment_c2greedy(config):
    """One row per prefix, with the bound ratio on the K row only."""
    table = run_experiment(config)

    assert [row.k for row in table.rows] == [1, 2]
    np.testing.assert_allclose(table.sigmas('c2greedy'), [1.9, 2.0])
    assert [row.evals for row in table.rows] == [1, 2]
    assert table.rows[0].bound_ratio is None
    assert table.rows[1].bound_ratio == pytest.approx(1.0)
    assert table.stamp['backend'] == 'dense'


def test_run_experiment_baselines(config):
    """Each baseline contributes K rows scored with the exact spread."""
    table = run_experiment(replace(config, algorithms=('degree', 'random')))

    assert len(table.rows) == 4
    assert [row.algorithm for row in table.rows] == [
        'degree',
        'degree',
        'random',
        'random',
    ]
    np.testing.assert_allclose(table.sigmas('degree'), [1.9, 2.0])
    np.testing.assert_allclose(table.sigmas('random'), [1.9, 2.0])


def test_run_experiment_brute_force(config):
    """Brute force rows count the subsets searched for each k."""
    table = run_experiment(replace(config, algorithms=('brute',)))

    np.testing.assert_allclose(table.sigmas('brute'), [1.9, 2.0])
    assert [row.evals for row in table.rows] == [2, 1]


def test_run_experiment_writes_outputs(config):
    """Results, timings, labels and provenance are moved into place."""
    run_experiment(config)

    files = listdir(config.output_directory)
    assert sorted(files) == sorted(
        [RESULTS_FILE, TIMINGS_FILE, LABELS_FILE, PROVENANCE_FILE]
    )
    assert not any(name.startswith('.staging-') for name in files)
    assert _read(path_join(config.output_directory, LABELS_FILE)) == '0\t0\n1\t1\n'

    comments, rows = read_csv(path_join(config.output_directory, TIMINGS_FILE))
    assert comments == {}
    assert [row['k'] for row in rows] == ['1', '2']
    assert all(float(row['elapsed_ms']) >= 0 for row in rows)


def test_read_result_table(config):
    """Written results parse back to the same rows."""
    table = run_experiment(config)

    loaded = read_result_table(config.output_directory)

    assert loaded.stamp == {
        key: str(value) for key, value in table.stamp.items()
    }
    for written, read in zip(table.rows, loaded.rows):
        assert read.algorithm == written.algorithm
        assert read.k == written.k
        assert read.sigma == written.sigma
        assert read.evals == written.evals
        assert read.bound_ratio == written.bound_ratio
        assert read.truncation is None
        assert read.matches_reference is None


def test_results_are_deterministic(config, temp_dir):
    """Repeated runs with the same seed write identical results files."""
    second = replace(config, output_directory=path_join(temp_dir, 'again'))

    run_experiment(replace(config, algorithms=('c2greedy', 'random')))
    run_experiment(replace(second, algorithms=('c2greedy', 'random')))

    assert _read(path_join(config.output_directory, RESULTS_FILE)) == _read(
        path_join(second.output_directory, RESULTS_FILE)
    )


def test_provenance_accumulates(config):
    """Each run into the same directory adds a provenance record."""
    run_experiment(config)
    run_experiment(config)

    records = read_provenance(config.output_directory)
    assert [record['command'] for record in records] == ['experiment', 'experiment']
    assert records[0]['parameters']['k'] == 2


def test_failed_write_leaves_no_outputs(config, mocker):
    """A failure while staging leaves the output directory untouched."""
    mocker.patch(
        'hc_service.experiment.write_label_table', side_effect=OSError('disk full')
    )

    with pytest.raises(OSError):
        run_experiment(config)

    assert listdir(config.output_directory) == []


def test_run_experiment_budget_too_large(config):
    """K larger than the network is a configuration error."""
    with pytest.raises(InvalidConfiguration):
        run_experiment(replace(config, k=3), write=False)


def test_run_experiment_bad_edge_list(config, temp_dir):
    """Library errors are reported with the stage that raised them."""
    file_path = path_join(temp_dir, 'loop.tsv')
    with open(file_path, 'w', encoding='utf-8') as file_handler:
        file_handler.write('0\t0\t1.0\n')

    with pytest.raises(ExperimentServiceError) as error:
        run_experiment(replace(config, network=NetworkConfig(edge_list=file_path)))

    assert error.value.stage == 'load network'
    assert error.value.exit_code == 3


def test_compare_backends(config):
    """Dense rows plus K rows for each truncation, the diameter included."""
    table = compare_backends(replace(config, truncation_sweep=(0, 50)))

    assert len(table.rows) == 8
    assert [row.truncation for row in table.rows] == [
        None,
        None,
        0,
        0,
        1,
        1,
        50,
        50,
    ]
    assert table.stamp['diameter_truncation'] == 1
    assert all(row.matches_reference for row in table.rows)
    np.testing.assert_allclose(table.sigmas('c2greedy', 50), [1.9, 2.0])
    assert isdir(config.output_directory)


def test_compare_backends_capacity(config):
    """Without a dense reference the comparison is refused."""
    with pytest.raises(ExperimentServiceError) as error:
        compare_backends(replace(config, dense_threshold=1), write=False)

    assert error.value.exit_code == 4


def test_timing_harness(config):
    """Timing runs skip bounds and time every configured variant."""
    table = timing_harness(
        replace(
            config,
            algorithms=('c2greedy', 'lazy_greedy'),
            mc_runs=100,
            mc_horizon=5,
        ),
        write=False,
    )

    assert [row.algorithm for row in table.rows] == [
        'c2greedy',
        'c2greedy',
        'lazy_greedy',
        'lazy_greedy',
    ]
    assert all(row.bound_ratio is None for row in table.rows)
    np.testing.assert_allclose(table.sigmas('lazy_greedy'), [1.9, 2.0])


def test_timing_harness_needs_monte_carlo_variant(config):
    """Timing without a Monte Carlo greedy variant is a configuration error."""
    with pytest.raises(InvalidConfiguration):
        timing_harness(replace(config, algorithms=('c2greedy', 'degree')))


def test_select_backend(config):
    """Auto picks dense for small networks; Neumann keeps T and samples."""
    augmented = augment_with_bias(build_network(config))
    neumann = replace(config, backend='neumann', truncation=7, neumann_samples=16)

    assert select_backend(config, augmented) == Backend.dense()
    assert select_backend(neumann, augmented) == Backend.neumann(7, 16)


def test_build_network_generators(config):
    """Generated networks follow the configured generator."""
    kronecker = replace(
        config,
        network=NetworkConfig(
            generator='kronecker', initiator=[[1.0, 1.0], [1.0, 1.0]], power=3
        ),
    )
    forest_fire = replace(
        config, network=NetworkConfig(generator='forestfire', n_target=20)
    )

    assert build_network(kronecker).n_edges == 56
    assert build_network(forest_fire).n_raw == 20
    assert describe_source(forest_fire.network).startswith('forestfire(n_target=20')
    assert describe_source(config.network) == config.network.edge_list


def test_build_network_beta_file(config, temp_dir):
    """A beta file sets one beta per node."""
    file_path = path_join(temp_dir, 'beta.txt')
    with open(file_path, 'w', encoding='utf-8') as file_handler:
        file_handler.write('0.2\n0.3\n')

    network = build_network(replace(config, beta=file_path))

    np.testing.assert_allclose(network.beta, [0.2, 0.3])


def test_write_trace(config, temp_dir):
    """Traces list one selected seed per row."""
    trace = c2greedy(augment_with_bias(build_network(config)), 2)
    file_path = path_join(temp_dir, 'trace.csv')

    write_trace(trace, file_path)

    comments, rows = read_csv(file_path)
    assert comments == {'algorithm': 'c2greedy', 'backend': 'dense'}
    assert [row['seed'] for row in rows] == ['0', '1']
    assert [float(row['sigma']) for row in rows] == pytest.approx([1.9, 2.0])


@pytest.mark.slow
def test_timing_harness_evaluation_counts(config):
    """Closed-form greedy needs one evaluation per seed; lazy beats plain."""
    network = NetworkConfig(generator='forestfire', n_target=150)
    table = timing_harness(
        replace(
            config,
            network=network,
            k=3,
            algorithms=('c2greedy', 'greedy', 'lazy_greedy'),
            mc_runs=50,
            mc_horizon=10,
        ),
        write=False,
    )

    evals = {row.algorithm: row.evals for row in table.rows if row.k == 3}
    assert evals['c2greedy'] == 3
    assert evals['greedy'] == 150 + 149 + 148
    assert evals['lazy_greedy'] < evals['greedy']


def test_rescore_trace(config):
    """Simulated spreads are replaced by exact prefix spreads."""
    augmented = augment_with_bias(build_network(config))
    trace = mc_greedy(augmented, 2, runs=7, rng_seed=1)

    rescored = rescore_trace(augmented, trace, config.dense_threshold)

    assert rescored.seeds == trace.seeds
    assert rescored.algorithm == trace.algorithm
    assert rescored.total_evaluations == trace.total_evaluations
    np.testing.assert_allclose(rescored.sigmas, [1.9, 2.0])
    np.testing.assert_allclose(
        [step.marginal_gain for step in rescored.steps], [1.9, 0.1]
    )


def test_rescore_trace_with_bias_value(config):
    """With b > 0 the first gain is measured from the unseeded steady state."""
    augmented = augment_with_bias(build_network(config), b=0.5)
    trace = c2greedy(augmented, 1)

    rescored = rescore_trace(augmented, trace, config.dense_threshold)

    expected = influence_spread(augmented, trace.seeds)
    assert rescored.sigmas[0] == pytest.approx(expected)
    assert rescored.steps[0].marginal_gain == pytest.approx(
        expected - influence_spread(augmented, [])
    )


def test_compare_backends_fixed_truncation(config):
    """A configured truncation joins the sweep in place of the diameter."""
    table = compare_backends(
        replace(config, truncation=7, truncation_sweep=(0,)), write=False
    )

    assert [row.truncation for row in table.rows] == [None, None, 0, 0, 7, 7]
    assert table.stamp['diameter_truncation'] == 7


@pytest.mark.slow
def test_compare_backends_forest_fire(config):
    """At the diameter the series picks seeds within 1% of the dense spread.

    Exact seed agreement needs a longer series; it holds by T = 200.

    """
    network = NetworkConfig(generator='forestfire', n_target=1000)
    table = compare_backends(
        replace(config, network=network, k=10, truncation_sweep=(200,)),
        write=False,
    )

    diameter = table.stamp['diameter_truncation']
    dense = table.sigmas('c2greedy')
    np.testing.assert_allclose(table.sigmas('c2greedy', diameter), dense, rtol=0.01)
    assert all(row.matches_reference for row in table.rows if row.truncation == 200)


def test_results_header_follows_comment_lines(config):
    """Stamp lines come first; a reader skipping `#` lines sees the header."""
    run_experiment(config)

    lines = _read(path_join(config.output_directory, RESULTS_FILE)).splitlines()
    stamp = [line for line in lines if line.startswith('# ')]
    rows = list(csv.DictReader(lines[len(stamp) :]))

    assert lines[: len(stamp)] == stamp
    assert [line.partition('=')[0] for line in stamp] == [
        '# version',
        '# rng_seed',
        '# backend',
    ]
    assert list(rows[0]) == RESULT_FIELDS
    assert [row['k'] for row in rows] == ['1', '2']
