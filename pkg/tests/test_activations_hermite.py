import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hithresh.activations import ActivationSpec, choose_threshold, tail_rho
from hithresh.errors import DomainError, InvalidArgument
from hithresh.hermite import (H2, H4, activation_coeff, coeff_table, cross_coeff, cross_coeff_he, h_all, h_eval,
                              weighted_h_eval)
from hithresh.stats_core import normal_pdf


def test_activation_values():
    assert ActivationSpec("sign-threshold", 1.0)(np.array([0.5, 1.0, 1.5])).tolist() == [0.0, 0.0, 1.0]
    assert ActivationSpec("relu-threshold", 1.0)(3.0) == 2.0
    assert ActivationSpec("sigmoid-threshold", 0.0)(0.0) == 0.5
    assert ActivationSpec("exp-rate", 1.0, rate=0.5)(3.0) == pytest.approx(math.e)
    assert ActivationSpec("custom-even", cap=4.0)(np.array([-3.0, 1.0])).tolist() == [4.0, 1.0]


def test_activation_validation():
    with pytest.raises(InvalidArgument):
        ActivationSpec("tanh")
    with pytest.raises(InvalidArgument):
        ActivationSpec("sign-threshold", -1.0)
    with pytest.raises(InvalidArgument):
        ActivationSpec("custom-even", fn=lambda a: a)


def test_tail_bound_and_threshold():
    u = ActivationSpec("sign-threshold", 2.0)
    assert tail_rho(u, 2.0, 1.0) == pytest.approx(normal_pdf(2.0))
    assert choose_threshold("sign-threshold", 8, 1.0) == pytest.approx(2 * math.sqrt(math.log(8)))
    with pytest.raises(DomainError):
        tail_rho(ActivationSpec("exp-plain"), 0.0, 1.0)


def test_frozen_hermite_values():
    assert h_eval(4, 0.0) == pytest.approx(3 / math.sqrt(24), abs=1e-15)   # 0.6123724356957945
    assert h_eval(2, 1.0) == 0.0
    assert h_eval(3, 2.0) == pytest.approx((8 - 6) / math.sqrt(6))


@given(st.floats(-5, 5), st.floats(0.2, 3.0))
def test_weighted_forms_agree(a, sigma):
    z = np.array([sigma, 0.0])
    X = np.array([[a / sigma, 0.0]])
    assert H2(z, X)[0] == pytest.approx(weighted_h_eval(2, sigma, a), rel=1e-9, abs=1e-9)
    assert H4(z, X)[0] == pytest.approx(weighted_h_eval(4, sigma, a), rel=1e-9, abs=1e-8)


def test_h_index_domain():
    for k in (-1, 17, 2.5):
        with pytest.raises(DomainError):
            h_eval(k, 0.0)
    with pytest.raises(DomainError):
        weighted_h_eval(2, 0.0, 1.0)


def test_quadrature_orthonormality():
    x, w = np.polynomial.hermite_e.hermegauss(40)
    w = w / math.sqrt(2 * math.pi)
    H = h_all(12, x)
    G = (H * w) @ H.T
    assert np.allclose(G, np.eye(13), atol=1e-10)


def test_sign_coefficient_closed_form():
    # E[1(g > t) h_2(g)] = t phi(t) / sqrt(2)
    u = ActivationSpec("sign-threshold", 2.0)
    assert activation_coeff(u, 2) == pytest.approx(2 * normal_pdf(2.0) / math.sqrt(2), abs=1e-10)
    assert activation_coeff(u, 2) == pytest.approx(0.0763548, abs=1e-7)


def test_relu_coefficients():
    u = ActivationSpec("relu-threshold", 0.0)
    tab = coeff_table(u, 4)
    assert tab[0] == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-10)
    assert tab[1] == pytest.approx(0.5, abs=1e-10)
    assert tab[2] == pytest.approx(1 / math.sqrt(4 * math.pi), abs=1e-10)
    assert tab.beta == tab[2]


def test_cross_coeff_frozen_and_forms():
    assert cross_coeff(4, 2, 0.5) == pytest.approx(-0.32475952641916445, abs=1e-14)
    assert cross_coeff_he(4, 2, 0.5) == pytest.approx(-1.125)
    assert cross_coeff(5, 2, 0.7) == 0.0
    assert cross_coeff(2, 4, 0.7) == 0.0
    # normalized and He forms differ by sqrt(m!/n!)
    for n, m in [(4, 2), (6, 2), (6, 4), (5, 1)]:
        ratio = math.sqrt(math.factorial(m) / math.factorial(n))
        assert cross_coeff(n, m, 0.3) == pytest.approx(cross_coeff_he(n, m, 0.3) * ratio)


@pytest.mark.parametrize("gamma", [-0.9, 0.3, 1.5])
def test_cross_coeff_by_quadrature(gamma):
    x, w = np.polynomial.hermite_e.hermegauss(60)
    w = w / math.sqrt(2 * math.pi)
    for n in range(7):
        for m in range(7):
            quad = float(np.sum(w * h_eval(m, x) * h_eval(n, gamma * x)))
            assert cross_coeff(n, m, gamma) == pytest.approx(quad, abs=1e-9)


def test_even_activation_coefficients_vanish_for_odd_k():
    tab = coeff_table(ActivationSpec("custom-even", cap=1.0), 6)
    assert abs(tab[1]) < 1e-12 and abs(tab[3]) < 1e-12 and abs(tab[5]) < 1e-12
