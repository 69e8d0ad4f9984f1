"""Reproducible standard-normal samples addressed by global sample index.

Samples are grouped in fixed blocks of ``BLOCK`` indices.  Block ``b`` is drawn
from ``PCG64(SeedSequence(seed, spawn_key=(b,)))`` as a ``(k, BLOCK)`` array,
filled coordinate by coordinate.  Hence

* the value of sample ``i`` depends only on ``(seed, i)``, never on how many
  samples are requested or how work is split between workers;
* the first ``k`` coordinates are the same for every ``k' >= k`` (common
  random numbers across truncation levels).
"""

import numpy as np

BLOCK = 4096


def _block(seed, b, k):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
    return rng.standard_normal((k, BLOCK))


def block_normals(seed, start, stop, k):
    """Standard normals for samples ``start..stop-1``, shape ``(stop - start, k)``."""
    if stop < start:
        raise ValueError("stop < start")
    out = np.empty((stop - start, k))
    if k == 0 or stop == start:
        return out
    b0, b1 = start // BLOCK, (stop - 1) // BLOCK
    for b in range(b0, b1 + 1):
        lo = max(start, b * BLOCK)
        hi = min(stop, (b + 1) * BLOCK)
        draw = _block(seed, b, k)
        out[lo - start : hi - start] = draw[:, lo - b * BLOCK : hi - b * BLOCK].T
    return out
