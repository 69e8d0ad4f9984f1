"""Moments of monomials in independent standard normals.

``E[xi^n]`` is ``(n - 1)!!`` for even ``n`` and zero for odd ``n``.  A finite
combination ``S(xi) = sum_I a_I xi^I`` vanishes only when every ``a_I`` does;
numerically this shows up as a positive definite moment Gram matrix, and
constructively as a probe monomial ``xi^M`` whose correlation with one chosen
term of ``S`` dominates all the others.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import multiindex as mi
from .errors import ProbeSearchError
from .rng import block_normals

GRAM_SIZE_LIMIT = 2000


def single_moment_exact(n):
    """``E[xi^n]`` as an exact integer."""
    if n < 0:
        raise ValueError("moment order must be non-negative")
    if n % 2:
        return 0
    return math.prod(range(1, n, 2))


def single_moment(n):
    return float(single_moment_exact(n))


def log_single_moment(n):
    """Natural log of ``E[xi^n]``; ``-inf`` for odd ``n``."""
    if n % 2:
        return -math.inf
    # (n-1)!! = n! / (2^(n/2) (n/2)!)
    return math.lgamma(n + 1) - 0.5 * n * math.log(2.0) - math.lgamma(n / 2 + 1)


def monomial_moment_exact(index):
    return math.prod(single_moment_exact(i) for i in index)


def monomial_moment(index):
    """``E[xi^I]`` for independent standard normals."""
    if any(i % 2 for i in index):
        return 0.0
    if sum(index) > 40:
        return math.exp(sum(log_single_moment(i) for i in index))
    return float(monomial_moment_exact(index))


def gram_matrix(k, n):
    """Moment matrix ``E[xi^I xi^J]`` over all monomials of degree <= n.

    Rows and columns follow the graded-lex order of ``multiindex.up_to``.
    """
    size = math.comb(n + k, k)
    if size > GRAM_SIZE_LIMIT:
        raise ValueError(f"{size} monomials exceed the limit of {GRAM_SIZE_LIMIT}")
    basis = mi.up_to(k, n)
    return _gram(basis)


def _gram(basis):
    m = len(basis)
    g = np.empty((m, m))
    for a in range(m):
        for b in range(a, m):
            g[a, b] = g[b, a] = monomial_moment(mi.add(basis[a], basis[b]))
    return g


def gram_determinant(k, n):
    """Exact determinant of :func:`gram_matrix` (fraction-free elimination)."""
    basis = mi.up_to(k, n)
    a = [[monomial_moment_exact(mi.add(i, j)) for j in basis] for i in basis]
    return _bareiss(a)


def _bareiss(a):
    a = [row[:] for row in a]
    n = len(a)
    sign, prev = 1, 1
    for p in range(n - 1):
        if a[p][p] == 0:
            swap = next((r for r in range(p + 1, n) if a[r][p] != 0), None)
            if swap is None:
                return 0
            a[p], a[swap] = a[swap], a[p]
            sign = -sign
        for i in range(p + 1, n):
            for j in range(p + 1, n):
                a[i][j] = (a[i][j] * a[p][p] - a[i][p] * a[p][j]) // prev
        prev = a[p][p]
    return sign * a[-1][-1] if n else 1


@dataclass
class MonomialCoeffs:
    """``S(xi) = sum_I a_I xi^I`` with finite support; zeros are dropped."""

    k: int
    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for idx, a in self.entries.items():
            idx = tuple(int(i) for i in idx)
            if len(idx) != self.k or min(idx, default=0) < 0:
                raise ValueError(f"bad multi-index {idx} for k={self.k}")
            if a != 0:
                clean[idx] = float(a)
        self.entries = clean

    @property
    def max_degree(self):
        return max((sum(i) for i in self.entries), default=0)

    def indices(self):
        return sorted(self.entries, key=mi.grlex_key)

    def coefficients(self):
        return np.array([self.entries[i] for i in self.indices()])

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        idx = self.indices()
        return mi.monomials(xi, idx) @ self.coefficients()


def leading_index(s):
    """The index picked by nested maxima over coordinates, and the depth ``l``.

    Coordinate ``r`` is maximized over the indices that tied on coordinates
    ``1..r-1``; ``l`` is the first ``r`` at which only one index is left (0 for
    a single-term sum).  Also returns the nested sets ``I_0 >= I_1 >= ... >= I_l``.
    """
    current = list(s.entries)
    if not current:
        raise ValueError("S has no nonzero coefficient")
    nested = [current]
    r = 0
    while len(current) > 1:
        top = max(i[r] for i in current)
        current = [i for i in current if i[r] == top]
        nested.append(current)
        r += 1
    return current[0], len(nested) - 1, nested


def _log_ratio(m, i, j):
    """``log(E[xi^(m+i)] / E[xi^(m+j)])`` for one coordinate with ``m + j`` even."""
    if (m + i) % 2:
        return -math.inf
    lo, hi = sorted((m + i, m + j))
    # (hi-1)!! / (lo-1)!! = (lo+1)(lo+3)...(hi-1)
    s = math.fsum(math.log(t) for t in range(lo + 1, hi, 2))
    return s if i > j else -s


def probe_log_margin(s, j_index, m_index, subset=None):
    """``log|a_J E[xi^(M+J)]| - log(2 sum_{I != J} |a_I E[xi^(M+I)]|)``.

    Positive exactly when the dominance inequality holds.  Computed through
    moment ratios, so no factorial is ever formed.  ``subset`` restricts the
    competing indices.
    """
    a_j = abs(s.entries[j_index])
    logs = []
    for idx in s.entries if subset is None else subset:
        if idx == j_index:
            continue
        lr = sum(_log_ratio(m, i, j) for m, i, j in zip(m_index, idx, j_index))
        if lr > -math.inf:
            logs.append(lr + math.log(abs(s.entries[idx])))
    if not logs:
        return math.inf
    top = max(logs)
    if top > 700:
        return math.log(a_j) - math.log(2.0) - top
    rest = math.fsum(math.exp(v) for v in logs)
    return math.log(a_j) - math.log(2.0 * rest)


def _ratio(m, i, j):
    """Exact ``E[xi^(m+i)] / E[xi^(m+j)]`` for one coordinate with ``m + j`` even."""
    if (m + i) % 2:
        return Fraction(0)
    lo, hi = sorted((m + i, m + j))
    p = math.prod(range(lo + 1, hi, 2))
    return Fraction(p) if i > j else Fraction(1, p)


def probe_dominates(s, j_index, m_index, subset=None):
    """Exact test of the dominance inequality, through telescoped moment ratios.

    Each ratio is a product of at most ``|i_r - j_r| / 2`` integers, so the
    test stays cheap for any probe exponent.
    """
    rest = Fraction(0)
    for idx in s.entries if subset is None else subset:
        if idx == j_index:
            continue
        ratio = math.prod((_ratio(m, i, j) for m, i, j in zip(m_index, idx, j_index)), start=Fraction(1))
        rest += abs(Fraction(s.entries[idx])) * ratio
    return abs(Fraction(s.entries[j_index])) > 2 * rest


def construct_probe(s, max_doublings=64):
    """Find ``(J, M)`` with ``|a_J E[xi^M xi^J]| > 2 sum_{I != J} |a_I E[xi^M xi^I]|``.

    ``J`` comes from :func:`leading_index`.  Every ``m_r`` starts at the parity
    making ``j_r + m_r`` even.  The exponents ``m_l, m_{l-1}, ..., m_1`` are
    then raised in turn (base + 2, + 4, + 8, ...) until ``J`` dominates the
    indices of ``I_{r-1}``; raising ``m_r`` shrinks every competitor with a
    smaller ``r``-th exponent and leaves the ratios inside ``I_r`` unchanged,
    so each stage terminates.  The stopping test is exact; the log margin is
    only reported on failure.
    """
    j_index, depth, nested = leading_index(s)
    m = [j % 2 for j in j_index]
    for r in range(depth, 0, -1):
        pool = nested[r - 1]
        base = m[r - 1]
        doublings = 0
        while not probe_dominates(s, j_index, m, pool):
            doublings += 1
            if doublings > max_doublings:
                raise ProbeSearchError(
                    f"no probe found for coordinate {r} within {max_doublings} doublings",
                    log_margin=probe_log_margin(s, j_index, m, pool),
                )
            m[r - 1] = base + 2**doublings
    return j_index, tuple(m)


def probe_expectation(s, m_index):
    """``E[xi^M S(xi)]`` as an exact fraction (floats in ``S`` are exact binary fractions)."""
    total = Fraction(0)
    for idx, a in s.entries.items():
        total += Fraction(a) * monomial_moment_exact(mi.add(idx, m_index))
    return total


@dataclass
class UniquenessReport:
    mc_estimate: float
    mc_stderr: float
    exact: float


def uniqueness_residual(s, samples, seed):
    """Monte Carlo and exact values of ``E[S(xi)^2]``.

    The exact value is the quadratic form of the coefficients with the moment
    Gram matrix on the support of ``S``; it is zero only for ``S = 0``.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    idx = s.indices()
    if not idx:
        return UniquenessReport(0.0, 0.0, 0.0)
    a = s.coefficients()
    exact = float(a @ _gram(idx) @ a)
    vals = s(block_normals(seed, 0, samples, s.k)) ** 2
    return UniquenessReport(
        mc_estimate=float(np.mean(vals)),
        mc_stderr=float(np.std(vals, ddof=1) / math.sqrt(samples)) if samples > 1 else math.inf,
        exact=exact,
    )
