"""Counter-keyed random streams.

Every stochastic choice in a run (epoch shuffles, buffer coin flips,
synthetic image content, crops) draws from a generator keyed by
(seed, tag, counter). Persisting the integer counter is enough to restore
any stream exactly, so checkpoints never need raw RNG state blobs.
"""

from __future__ import annotations

import numpy as np

STREAM_ORDER = 1
STREAM_BUFFER_X = 2
STREAM_BUFFER_Y = 3
STREAM_SYNTH = 4
STREAM_CROP = 5
STREAM_SAMPLE = 6


def stream_rng(seed: int, tag: int, counter: int = 0) -> np.random.Generator:
    """Deterministic generator for one (seed, tag, counter) triple."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, tag, counter))))
