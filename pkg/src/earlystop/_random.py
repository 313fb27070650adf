"""Seed derivation for reproducible, independent random streams.

Every random stream in the package is derived from a 64-bit master seed and a
``(trial, node)`` pair by splitmix64 mixing, so that the streams can be
regenerated from the three integers alone::

    s = splitmix64(master_seed)
    s = splitmix64(s ^ trial)
    s = splitmix64(s ^ node)
    stream = numpy.random.Generator(PCG64(s))

Node ``0`` of trial ``t`` is the stream used by single-node algorithms (SGD,
SVRG), so a one-node DSGD run with the same seed consumes the same numbers.
"""

import numpy as np

MASK64 = (1 << 64) - 1

# Reserved node index for dataset draws inside a trial.
DATA_NODE = 1 << 32
# Reserved trial index for datasets shared by every trial of an experiment.
SHARED_TRIAL = 1 << 32


def splitmix64(value):
    z = (value + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed, trial=0, node=0):
    """Mix ``(master_seed, trial, node)`` into a single 64-bit seed."""
    for part in (master_seed, trial, node):
        if int(part) < 0:
            raise ValueError("seed components must be nonnegative integers")
    s = splitmix64(int(master_seed) & MASK64)
    s = splitmix64(s ^ (int(trial) & MASK64))
    return splitmix64(s ^ (int(node) & MASK64))


def make_stream(master_seed, trial=0, node=0):
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, trial, node)))


def as_generator(rng):
    """Accept a Generator or an integer seed (interpreted as trial 0, node 0)."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        raise ValueError("a seed or numpy Generator is required")
    return make_stream(int(rng), 0, 0)
