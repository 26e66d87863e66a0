"""Reproducible random streams.

Every random consumer gets its own child of one `SeedSequence`, so results
depend only on the master seed and never on how work is scheduled. Monte
Carlo runs are grouped into fixed-size batches with one counter-based
Philox stream per batch; the batch layout is a function of the run count
alone, which keeps estimates bit-identical across thread counts.

"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MC_BATCH_SIZE = 256


@dataclass(frozen=True)
class GeneratorStreams:
    """Independent streams used while growing a synthetic network."""

    topology: np.random.Generator
    weights: np.random.Generator


@dataclass(frozen=True)
class RunBatch:
    """A contiguous block of Monte Carlo runs and the stream that drives it."""

    index: int
    start: int
    size: int
    rng: np.random.Generator


def make_generator_streams(seed: int | None) -> GeneratorStreams:
    """Topology and weight streams for one network generation."""
    topology, weights = np.random.SeedSequence(seed).spawn(2)
    return GeneratorStreams(
        topology=np.random.default_rng(topology),
        weights=np.random.default_rng(weights),
    )


def make_run_batches(
    seed: int | None, n_runs: int, batch_size: int = MC_BATCH_SIZE
) -> list[RunBatch]:
    """Split `n_runs` into batches, each with its own Philox stream."""
    n_batches = -(-n_runs // batch_size)
    children = np.random.SeedSequence(seed).spawn(n_batches)
    return [
        RunBatch(
            index=index,
            start=index * batch_size,
            size=min(batch_size, n_runs - index * batch_size),
            rng=np.random.Generator(np.random.Philox(child)),
        )
        for index, child in enumerate(children)
    ]

