import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hithresh.errors import InvalidArgument, UnsupportedMode
from hithresh.polynomial import SparsePolynomial, make_monomial, pairwise_polynomial, product_coefficient_sum

coef = st.floats(-3, 3, allow_nan=False).filter(lambda c: abs(c) > 1e-3)


@st.composite
def polys(draw, d=4):
    sets = {}
    for r in range(1, 4):
        for S in itertools.combinations(range(d), r):
            if draw(st.booleans()):
                sets[S] = draw(coef)
    return SparsePolynomial.from_sets(draw(st.floats(-2, 2)), sets)


def test_monomial_normalization():
    assert make_monomial([2, 0, (2, 1)]) == ((0, 1), (2, 2))
    with pytest.raises(InvalidArgument):
        make_monomial([(0, 0)])


def test_degree1_rejects_powers_and_constant_monomials():
    with pytest.raises(InvalidArgument):
        SparsePolynomial(0.0, {((0, 2),): 1.0}, True)
    with pytest.raises(InvalidArgument):
        SparsePolynomial(0.0, {(): 1.0})


def test_or_polynomial_is_or_on_binary_inputs():
    P = SparsePolynomial.or_polynomial(3)
    X = np.array(list(itertools.product([0, 1], repeat=3)), dtype=float)
    assert np.array_equal(P.evaluate(X), X.max(axis=1))


def test_linear_parts():
    P = pairwise_polynomial(3, 1.0, 0.5)
    assert P.linear_coeffs().tolist() == [1.0, 1.0, 1.0]
    assert len(P.higher_terms()) == 3
    assert P.abs_coeff_sum() == pytest.approx(4.5)
    assert str(SparsePolynomial.from_sets(1.0, {(0, 1): 2.0})) == "1 + 2*X1*X2"


@given(polys(), st.integers(0, 3))
@settings(max_examples=60)
def test_split_reconstructs(P, i):
    Q, R = P.split(i)
    X = np.random.default_rng(0).standard_normal((20, 4))
    assert np.allclose(P.evaluate(X), X[:, i] * Q.evaluate(X) + R.evaluate(X))
    X2 = X.copy()
    X2[:, i] = 7.0
    assert np.allclose(Q.evaluate(X), Q.evaluate(X2))


@given(polys(), st.floats(0.01, 2.0))
@settings(max_examples=60)
def test_substitute_shifted_matches_evaluation(P, mu):
    X = np.random.default_rng(1).standard_normal((10, 4))
    assert np.allclose(P.substitute_shifted(mu).evaluate(X), P.evaluate(mu * (X + 1)))


@given(polys())
@settings(max_examples=40)
def test_text_round_trip(P):
    assert SparsePolynomial.from_lines(P.to_lines()) == P


def test_non_multilinear_algebra_unsupported():
    P = SparsePolynomial(0.0, {((0, 2),): 1.0}, degree1=False)
    with pytest.raises(UnsupportedMode):
        P.partial_derivative(0)
    assert P.evaluate(np.array([[3.0]])) == 9.0


def test_add_scale_and_coefficient_sums():
    P = SparsePolynomial.from_sets(0.0, {(0,): 1.0, (0, 1): 2.0})
    assert (P + P).terms == P.scale(2).terms
    assert product_coefficient_sum(P, 0.5, contains=(0,)) == pytest.approx(2.0)
    assert product_coefficient_sum(P, 0.5) == pytest.approx(0.5 + 0.5)
