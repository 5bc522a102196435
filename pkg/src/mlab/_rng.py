"""Keyed, splittable random streams.

Every stochastic routine derives its generator from
``(global seed, purpose tag, replication / chunk indices...)`` via
``numpy.random.SeedSequence``, backed by the counter-based Philox bit
generator.  Streams are therefore independent and insensitive to worker
scheduling: the same key always yields the same sample sequence,
bit for bit.
"""
from __future__ import annotations

import numpy as np

# Purpose tags keep streams for different uses disjoint even when the
# remaining key components collide.
PURPOSE_EXIT = 1
PURPOSE_OCCUPANCY = 2
PURPOSE_RATES = 3
PURPOSE_CTMC = 4
PURPOSE_INJECT_SB = 5
PURPOSE_INJECT_SBSTAR = 6
PURPOSE_INJECT_LB = 7
PURPOSE_INJECT_MULT = 8
PURPOSE_SHARPNESS = 9
PURPOSE_FUZZ = 10

#: Fixed draw block size used by chunked samplers; a constant block size keeps
#: the consumed sample sequence identical no matter how a run is interrupted
#: or resumed chunk by chunk.
CHUNK = 1 << 20


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for ``(seed, *key)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((int(seed),) + tuple(int(k) for k in key))))
