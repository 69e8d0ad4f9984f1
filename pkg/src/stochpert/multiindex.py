"""Multi-index helpers.

A multi-index is a plain tuple of non-negative ints ``(i_1, ..., i_k)``; it names
the monomial ``xi_1**i_1 * ... * xi_k**i_k``.  Everything in the package orders
multi-indices graded-lexicographically: by total degree first, then with larger
leading exponents first, so ``(1, 0)`` precedes ``(0, 1)``.
"""

from itertools import combinations_with_replacement

import numpy as np


def degree(index):
    return sum(index)


def grlex_key(index):
    return (sum(index), tuple(-i for i in index))


def unit(k, i):
    """Multi-index ``e_i`` of length ``k``."""
    out = [0] * k
    out[i] = 1
    return tuple(out)


def add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def homogeneous(k, m):
    """All multi-indices of length ``k`` and degree ``m`` in graded-lex order."""
    if k == 0:
        return [()] if m == 0 else []
    out = []
    for combo in combinations_with_replacement(range(k), m):
        idx = [0] * k
        for c in combo:
            idx[c] += 1
        out.append(tuple(idx))
    return sorted(out, key=grlex_key)


def up_to(k, n):
    """All multi-indices of length ``k`` with degree at most ``n``."""
    out = []
    for m in range(n + 1):
        out.extend(homogeneous(k, m))
    return out


def monomials(xi, indices):
    """Evaluate ``xi**I`` for each index.

    ``xi`` has shape ``(..., k)``; the result has shape ``(..., len(indices))``.
    """
    xi = np.asarray(xi, dtype=float)
    cols = []
    for idx in indices:
        val = np.ones(xi.shape[:-1])
        for r, p in enumerate(idx):
            if p:
                val = val * xi[..., r] ** p
        cols.append(val)
    if not cols:
        return np.zeros(xi.shape[:-1] + (0,))
    return np.stack(cols, axis=-1)
