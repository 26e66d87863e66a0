"""Utility functionality only needed by the experiment service."""

import csv
import os
from collections.abc import Iterable, Iterator
from contextlib import contextmanager
from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np

from hc_influence.exceptions import InvalidNetworkParameter


def resolve_threads(threads: int) -> int:
    """Number of worker threads; 0 means one per available CPU."""
    if threads == 0:
        return os.cpu_count() or 1
    return threads


def load_beta_file(file_path: str | Path, n_raw: int) -> np.ndarray:
    """Read one beta value per node, in node-index order."""
    values = np.atleast_1d(np.loadtxt(file_path, dtype=np.float64, comments='#'))
    if len(values) != n_raw:
        raise InvalidNetworkParameter(
            'beta', f'{file_path} holds {len(values)} values for {n_raw} nodes.'
        )
    return values


def write_csv(
    file_path: str | Path,
    fieldnames: list[str],
    rows: Iterable[dict],
    comments: dict | None = None,
) -> None:
    """Write rows as comma-separated UTF-8 with LF line endings.

    `comments` become leading `# key=value` lines.

    """
    with open(file_path, 'w', encoding='utf-8', newline='') as file_handler:
        for key, value in (comments or {}).items():
            file_handler.write(f'# {key}={value}\n')
        writer = csv.DictWriter(
            file_handler, fieldnames=fieldnames, lineterminator='\n'
        )
        writer.writeheader()
        writer.writerows(rows)


def read_csv(file_path: str | Path) -> tuple[dict, list[dict]]:
    """Read a file written by `write_csv`, returning comments and rows."""
    comments = {}
    with open(file_path, encoding='utf-8', newline='') as file_handler:
        lines = file_handler.read().split('\n')

    body = []
    for line in lines:
        if line.startswith('# '):
            key, _, value = line[2:].partition('=')
            comments[key] = value
        elif line:
            body.append(line)

    return comments, list(csv.DictReader(body))


@contextmanager
def staged_outputs(output_directory: str | Path) -> Iterator[Path]:
    """Stage files in a hidden directory, then move them into place.

    Files only reach `output_directory` when the block completes; on an
    exception the staging directory and everything in it is removed.

    """
    output_directory = Path(output_directory)
    output_directory.mkdir(parents=True, exist_ok=True)
    with TemporaryDirectory(dir=output_directory, prefix='.staging-') as staging:
        staging_path = Path(staging)
        yield staging_path
        for staged_file in sorted(staging_path.iterdir()):
            os.replace(staged_file, output_directory / staged_file.name)
