"""Counter-based random numbers.

Every draw is a pure function of a key (seed plus a few integer fields) and a
counter, so a pass can be replayed, split across workers, or re-run by another
algorithm variant and produce the same coin flips.
"""

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

# stream tags, so unrelated consumers never share a key
DIGRAPH = 0x1D16
ROOTS = 0x2007
GROWTH = 0x3C0E
REJECT = 0x4E1E


def mix64(x):
    x = (x + _GOLDEN) & _MASK
    x = ((x ^ (x >> 30)) * _M1) & _MASK
    x = ((x ^ (x >> 27)) * _M2) & _MASK
    return x ^ (x >> 31)


def mix64_array(x):
    x = np.asarray(x, dtype=np.uint64) + np.uint64(_GOLDEN)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(_M1)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(_M2)
    return x ^ (x >> np.uint64(31))


def make_key(seed, *fields):
    h = mix64(int(seed) & _MASK)
    for f in fields:
        h = mix64(h ^ (int(f) & _MASK))
    return h


def uniforms(key, *counters):
    """Uniform [0, 1) doubles, one per element of the broadcast counter arrays."""
    h = np.full(np.broadcast(*counters).shape if counters else (), key, dtype=np.uint64)
    for c in counters:
        h = mix64_array(h ^ np.asarray(c).astype(np.uint64))
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
