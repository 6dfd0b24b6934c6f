"""Deterministic random streams built on the counter-based Philox generator.

Every stochastic operation in this package takes either an explicit seed or a
Generator produced by :func:`stream`, so runs are bit-reproducible and
independent streams can be derived for env / agent / buffer / eval roles.
"""

from __future__ import annotations

import numpy as np

# Stream roles used by the training loop; any integers work, these are fixed
# so checkpoints stay compatible.
ROLE_ENV = 0
ROLE_AGENT = 1
ROLE_BUFFER = 2
ROLE_INIT = 3
ROLE_EVAL = 4


def stream(seed: int, *path: int) -> np.random.Generator:
    """Independent generator keyed by (seed, path); same arguments, same stream."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng: int | np.random.Generator) -> np.random.Generator:
    """Accept either a plain integer seed or an existing generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return stream(int(rng))
