"""Deterministic uniform sequence for multistart grids and boundary samples.

Linear congruential generator x <- (1664525 x + 1013904223) mod 2**32
started from 0x5EED; outputs x / 2**32 in [0, 1).  Used instead of a library
RNG so that sample points are bit-identical across platforms and versions.
"""

import numpy as np

SEED = 0x5EED
_A = 1664525
_C = 1013904223
_M = 2**32


def uniform(count, seed=SEED):
    out = np.empty(count)
    x = seed
    for i in range(count):
        x = (_A * x + _C) % _M
        out[i] = x / _M
    return out
