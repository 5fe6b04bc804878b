"""Counter-based random streams built on the SplitMix64 finaliser.

Every random quantity is a pure function of integer keys, so frames and
particles can be rendered in any order or in parallel with identical output.
"""

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x):
    """One SplitMix64 step on a Python int."""
    x = (x + _GOLDEN) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def mix(*keys):
    """Fold integer keys into one 64-bit value."""
    h = 0
    for k in keys:
        h = splitmix64(h ^ (int(k) & _MASK))
    return h


def generator(*keys):
    """A numpy Generator seeded by ``mix(*keys)``."""
    return np.random.Generator(np.random.PCG64(mix(*keys)))


def _splitmix64_array(x):
    x = x + np.uint64(_GOLDEN)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def uniform_keyed(base, index, attribute):
    """Uniform [0, 1) values for ``index`` (int array) under ``(base, attribute)``.

    Element ``i`` depends only on ``base``, ``index[i]`` and ``attribute``.
    """
    index = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = _splitmix64_array(np.uint64(mix(base, attribute)) ^ index)
        h = _splitmix64_array(h)
    # top 53 bits -> double in [0, 1)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
