"""Seeded random streams.

Every random object in the package is drawn from a Philox-4x64 generator
(counter based) keyed through NumPy's ``SeedSequence``.  A stream is named by
the user seed plus a tuple of small integers, so independent components never
share draws and any component can be rebuilt from its coordinates alone.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def _entropy(seed, stream):
    return [int(seed) & _MASK64, *(int(s) & _MASK64 for s in stream)]


def make_rng(seed, *stream):
    """Return a ``numpy.random.Generator`` for the stream ``(seed, *stream)``."""
    ss = np.random.SeedSequence(_entropy(seed, stream))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed, *stream):
    """Derive a 63-bit child seed for the stream ``(seed, *stream)``."""
    ss = np.random.SeedSequence(_entropy(seed, stream))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))
