"""Seed derivation for reproducible, order-independent randomness.

Every random draw in the package comes from a numpy ``Generator`` backed by
PCG64 and keyed by ``(seed, stream)``. Gaussians are drawn with numpy's
ziggurat sampler (``Generator.standard_normal``).
"""

import numpy as np

MASK64 = (1 << 64) - 1

# Sub-stream indices for one twin-experiment cell.
SIGNAL_STREAM = 0
OBSERVATION_STREAM = 1
ENSEMBLE_STREAM = 2
REFERENCE_STREAM = 3


def splitmix64(x):
    """One round of the SplitMix64 finalizer on a 64-bit integer."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def mix_seed(master_seed, index):
    """Derive an independent 64-bit seed for cell ``index`` of a sweep."""
    master_seed = int(master_seed) & MASK64
    return splitmix64(splitmix64(master_seed) ^ (int(index) & MASK64))


def substream(seed, stream):
    """Generator for sub-stream ``stream`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed) & MASK64, spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))
