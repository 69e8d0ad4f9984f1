import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from stochpert import (
    MonomialCoeffs,
    ProbeSearchError,
    construct_probe,
    gram_determinant,
    gram_matrix,
    monomial_moment,
    probe_dominates,
    single_moment,
    uniqueness_residual,
)
from stochpert import multiindex as mi
from stochpert.moments import (
    GRAM_SIZE_LIMIT,
    leading_index,
    log_single_moment,
    monomial_moment_exact,
    probe_expectation,
    probe_log_margin,
    single_moment_exact,
)


def _double_factorial(n):
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def test_low_moments():
    assert [single_moment_exact(n) for n in range(9)] == [1, 0, 1, 0, 3, 0, 15, 0, 105]
    with pytest.raises(ValueError):
        single_moment_exact(-1)


@given(st.integers(0, 300))
def test_moment_is_odd_double_factorial(n):
    expect = 0 if n % 2 else _double_factorial(n - 1)
    assert single_moment_exact(n) == expect


@given(st.integers(0, 150).map(lambda p: 2 * p))
def test_log_moment(n):
    assert log_single_moment(n) == pytest.approx(math.log(single_moment_exact(n)), abs=1e-9)


def test_moment_against_quadrature():
    # Gauss-Hermite (probabilists') integrates these exactly
    x, w = np.polynomial.hermite_e.hermegauss(30)
    w = w / w.sum()
    for n in range(12):
        assert single_moment(n) == pytest.approx(float(w @ x**n), abs=1e-9)


def test_monomial_moment_factorizes():
    assert monomial_moment((2, 4, 0)) == 3.0
    assert monomial_moment((2, 1)) == 0.0
    assert monomial_moment((30, 30)) == pytest.approx(float(single_moment_exact(30)) ** 2, rel=1e-12)


def test_gram_small_cases():
    assert np.array_equal(gram_matrix(1, 2), np.array([[1, 0, 1], [0, 1, 0], [1, 0, 3]], dtype=float))
    assert gram_determinant(1, 2) == 2
    for k, n in [(1, 4), (2, 3), (3, 2)]:
        g = gram_matrix(k, n)
        assert g.shape[0] == math.comb(n + k, k)
        assert np.linalg.eigvalsh(g)[0] > 0
        assert gram_determinant(k, n) > 0


@settings(max_examples=10, deadline=None)
@given(k=st.integers(1, 3), n=st.integers(0, 3))
def test_bareiss_matches_float_determinant(k, n):
    g = gram_matrix(k, n)
    assert gram_determinant(k, n) == pytest.approx(np.linalg.det(g), rel=1e-8)


def test_gram_size_limit():
    with pytest.raises(ValueError):
        gram_matrix(10, 6)
    assert math.comb(6 + 10, 10) > GRAM_SIZE_LIMIT


def test_coefficients_drop_zeros_and_validate():
    s = MonomialCoeffs(2, {(1, 0): 0.0, (0, 2): 3.0})
    assert s.indices() == [(0, 2)]
    assert s.max_degree == 2
    assert s(np.array([[1.0, 2.0]]))[0] == 12.0
    with pytest.raises(ValueError):
        MonomialCoeffs(2, {(1,): 1.0})


def test_leading_index_nested_maxima():
    s = MonomialCoeffs(3, {(2, 2, 0): 1, (2, 1, 1): 1, (1, 3, 0): 1, (0, 0, 4): 1})
    j, depth, nested = leading_index(s)
    assert j == (2, 2, 0)
    assert depth == 2
    assert set(nested[1]) == {(2, 2, 0), (2, 1, 1)}


def test_single_term_probe():
    s = MonomialCoeffs(2, {(3, 1): -4.0})
    j, m = construct_probe(s)
    assert j == (3, 1)
    assert m == (1, 1)
    # E[xi_1^4] E[xi_2^2] = 3
    assert probe_expectation(s, m) == -4 * 3


def test_probe_handles_backward_nesting():
    # the first coordinate alone does not separate J from (0, 4, 0)
    s = MonomialCoeffs(3, {(2, 2, 0): 1.0, (0, 4, 0): 1.0})
    j, m = construct_probe(s)
    assert j == (2, 2, 0)
    assert probe_dominates(s, j, m)


def test_probe_cap_reported():
    s = MonomialCoeffs(1, {(2,): 1e-300, (0,): 1e300})
    with pytest.raises(ProbeSearchError) as info:
        construct_probe(s, max_doublings=3)
    assert info.value.log_margin < 0


coeff_sets = st.dictionaries(
    st.sampled_from(mi.up_to(3, 4)),
    st.integers(-10, 10).filter(bool),
    min_size=1,
    max_size=20,
)


@settings(max_examples=200, deadline=None)
@given(coeff_sets)
def test_probe_dominates_exactly(entries):
    s = MonomialCoeffs(3, entries)
    j, m = construct_probe(s)
    lhs = abs(Fraction(s.entries[j])) * monomial_moment_exact(mi.add(j, m))
    rhs = 2 * sum(abs(Fraction(a)) * monomial_moment_exact(mi.add(i, m)) for i, a in s.entries.items() if i != j)
    assert lhs > rhs
    # a nonzero probe expectation certifies S != 0
    assert probe_expectation(s, m) != 0


@settings(max_examples=50, deadline=None)
@given(coeff_sets)
def test_log_margin_agrees_with_exact_test(entries):
    s = MonomialCoeffs(3, entries)
    j, m = construct_probe(s)
    margin = probe_log_margin(s, j, m)
    assume(abs(margin) > 1e-9)
    assert (margin > 0) == probe_dominates(s, j, m)


def test_uniqueness_residual():
    s = MonomialCoeffs(2, {(1, 0): 1.0, (0, 2): 2.0})
    # E[(xi_1 + 2 xi_2^2)^2] = 1 + 4 * 3
    rep = uniqueness_residual(s, 200_000, seed=4)
    assert rep.exact == pytest.approx(13.0)
    assert abs(rep.mc_estimate - rep.exact) < 4 * rep.mc_stderr
    assert uniqueness_residual(MonomialCoeffs(2, {}), 10, 0).exact == 0.0
