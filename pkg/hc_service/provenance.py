"""Module with provenance functions."""

import json
from datetime import datetime, timezone
from pathlib import Path

PROVENANCE_FILE = 'provenance.json'
PROGRAM = 'HC Influence Experiments'
VERSION_FILE = Path(__file__).parent / 'service_version.txt'


def get_semantic_version() -> str:
    """Parse the service_version.txt to get the semantic version number."""
    try:
        with open(VERSION_FILE, encoding='utf-8') as file_handler:
            return file_handler.read().strip()
    except FileNotFoundError:
        return 'Version not found'


def create_provenance_record(derived_from: str, parameters: dict, command: str) -> dict:
    """Create a serializable record describing one run.

    Args:
        derived_from: The network source, an edge-list path or a generator
            description.
        parameters: The configuration of the run as JSON-compatible values.
        command: The subcommand that produced the outputs.

    Returns:
        A record with the UTC timestamp, program, version, source and
        parameters of the run.

    """
    return {
        'date_time': datetime.now(timezone.utc).isoformat(),
        'program': PROGRAM,
        'version': get_semantic_version(),
        'command': command,
        'derived_from': derived_from,
        'parameters': parameters,
    }


def read_provenance(directory: str | Path) -> list:
    """Retrieve existing provenance records, normalized to a list.

    A missing file yields an empty list; a file holding a single record
    yields a one-element list.

    """
    path = Path(directory) / PROVENANCE_FILE
    if not path.is_file():
        return []

    with open(path, encoding='utf-8') as file_handler:
        existing = json.load(file_handler)
    if isinstance(existing, list):
        return existing
    # Single record.
    return [existing]


def append_provenance(directory: str | Path, record: dict) -> list:
    """Append `record` to the provenance file in `directory` and return all records."""
    records = read_provenance(directory)
    records.append(record)
    with open(Path(directory) / PROVENANCE_FILE, 'w', encoding='utf-8') as file_handler:
        json.dump(records, file_handler, indent=2)
        file_handler.write('\n')
    return records
