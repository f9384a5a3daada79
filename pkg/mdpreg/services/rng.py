"""
Seeded random streams.

Every stochastic operation draws from a numpy ``Generator`` over the counter-based
Philox bit generator, keyed by ``SeedSequence(entropy=seed, spawn_key=(stream, index))``.
The stream id separates independent uses of one seed (training samples, holdout
samples, synthetic logs, model generation); the index is the trial number. Streams
never depend on scheduling, so trials can run in any order or concurrently.
"""

from enum import IntEnum

import numpy as np

RNG_ALGORITHM = "philox4x64-10"


class Stream(IntEnum):
    SAMPLING = 0
    HOLDOUT = 1
    SESSION_LOGS = 2
    MODEL_GENERATION = 3


def make_rng(seed: int, stream: Stream = Stream.SAMPLING, index: int = 0) -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"seed must be a nonnegative integer, got {seed}")
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(int(stream), index))
    return np.random.Generator(np.random.Philox(sequence))


def trial_seed(base_seed: int, trial: int) -> int:
    """64-bit seed for one trial, derived from ``base_seed`` and the trial index."""
    sequence = np.random.SeedSequence(entropy=base_seed, spawn_key=(trial,))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])
