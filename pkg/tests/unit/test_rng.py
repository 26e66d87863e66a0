"""Tests for hc_influence.rng.py."""

import numpy as np

from hc_influence.rng import MC_BATCH_SIZE, make_generator_streams, make_run_batches


def test_make_run_batches_layout():
    """Runs are split into full batches plus a final partial batch."""
    batches = make_run_batches(0, 600)

    assert [batch.size for batch in batches] == [MC_BATCH_SIZE, MC_BATCH_SIZE, 88]
    assert [batch.start for batch in batches] == [0, 256, 512]
    assert [batch.index for batch in batches] == [0, 1, 2]


def test_make_run_batches_reproducible():
    """The same seed gives the same stream for every batch."""
    first = [batch.rng.random(4) for batch in make_run_batches(12, 300)]
    second = [batch.rng.random(4) for batch in make_run_batches(12, 300)]

    for left, right in zip(first, second):
        np.testing.assert_array_equal(left, right)
    assert not np.array_equal(first[0], first[1])


def test_make_run_batches_independent_of_run_count():
    """Leading batches do not change when more runs are requested."""
    short = make_run_batches(5, 256)[0].rng.random(3)
    long = make_run_batches(5, 1000)[0].rng.random(3)

    np.testing.assert_array_equal(short, long)


def test_make_generator_streams():
    """Topology and weight streams are reproducible and distinct."""
    streams = make_generator_streams(8)
    repeated = make_generator_streams(8)

    topology = streams.topology.random(5)
    np.testing.assert_array_equal(topology, repeated.topology.random(5))
    assert not np.array_equal(topology, streams.weights.random(5))
