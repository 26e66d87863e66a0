"""Test functions in hc_service.utilities."""

from os import listdir
from os.path import join as path_join

import numpy as np
import pytest

from hc_influence.exceptions import InvalidNetworkParameter
from hc_service.utilities import (
    load_beta_file,
    read_csv,
    resolve_threads,
    staged_outputs,
    write_csv,
)


def test_resolve_threads_explicit():
    """A positive thread count is used as given."""
    assert resolve_threads(3) == 3


def test_resolve_threads_all_cpus(mocker):
    """Zero threads means one per available CPU."""
    mocker.patch('hc_service.utilities.os.cpu_count', return_value=6)

    assert resolve_threads(0) == 6


def test_resolve_threads_unknown_cpu_count(mocker):
    """Fall back to one thread when the CPU count is unknown."""
    mocker.patch('hc_service.utilities.os.cpu_count', return_value=None)

    assert resolve_threads(0) == 1


def test_load_beta_file(temp_dir):
    """One value per line, comments ignored."""
    file_path = path_join(temp_dir, 'beta.txt')
    with open(file_path, 'w', encoding='utf-8') as file_handler:
        file_handler.write('# per-node beta\n0.1\n0.25\n')

    np.testing.assert_allclose(load_beta_file(file_path, 2), [0.1, 0.25])

    with pytest.raises(InvalidNetworkParameter):
        load_beta_file(file_path, 3)


def test_write_and_read_csv(temp_dir):
    """Comment lines come back as a dictionary and rows as strings."""
    file_path = path_join(temp_dir, 'table.csv')

    write_csv(
        file_path,
        ['name', 'value'],
        [{'name': 'a', 'value': 0.1}, {'name': 'b', 'value': ''}],
        {'version': '1.0.0', 'rng_seed': 4},
    )

    with open(file_path, encoding='utf-8', newline='') as file_handler:
        assert file_handler.read() == (
            '# version=1.0.0\n# rng_seed=4\nname,value\na,0.1\nb,\n'
        )

    comments, rows = read_csv(file_path)
    assert comments == {'version': '1.0.0', 'rng_seed': '4'}
    assert rows == [{'name': 'a', 'value': '0.1'}, {'name': 'b', 'value': ''}]


def test_staged_outputs_moves_files(temp_dir):
    """Staged files appear in the output directory and staging is removed."""
    output_directory = path_join(temp_dir, 'out')

    with staged_outputs(output_directory) as staging:
        (staging / 'results.csv').write_text('k\n1\n', encoding='utf-8')
        assert 'results.csv' not in listdir(output_directory)

    assert listdir(output_directory) == ['results.csv']


def test_staged_outputs_discards_on_error(temp_dir):
    """Nothing reaches the output directory when the block raises."""
    output_directory = path_join(temp_dir, 'out')

    with pytest.raises(RuntimeError):
        with staged_outputs(output_directory) as staging:
            (staging / 'results.csv').write_text('k\n1\n', encoding='utf-8')
            raise RuntimeError('interrupted')

    assert listdir(output_directory) == []
