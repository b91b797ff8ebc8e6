import math

import numpy as np
import pytest

from hithresh.activations import ActivationSpec
from hithresh.errors import CoverageFailure, InvalidArgument, InversionFailure, UnsupportedMode
from hithresh.hermite import coeff_table
from hithresh.landscape import (CorrelationData, LandscapeParams, align_and_score, assemble_and_invert,
                                canonical_sign, correlate_H, objective_G, objective_simultaneous,
                                recover_all_one_by_one, verify_local_min)
from hithresh.network import random_network
from hithresh.polynomial import pairwise_polynomial
from hithresh.sampling import Dataset, SampleOracle, sample_batch
from hithresh.stats_core import make_rng

U = ActivationSpec("sign-threshold", 1.5)


@pytest.fixture(scope="module")
def small():
    net = random_network(4, 4, U, pairwise_polynomial(4), seed=3)
    return net, sample_batch(SampleOracle(net, 3), 10_000)


def test_params_defaults():
    p = LandscapeParams.from_activation(U)
    tab = coeff_table(U, 4)
    assert p.lam_value == pytest.approx(abs(tab[4]) / tab[2] ** 2)
    assert p.eps_value == pytest.approx(1e-3 * abs(tab[4]))
    with pytest.raises(InvalidArgument):
        LandscapeParams(1.0, 1.0, gamma=0.5)
    with pytest.raises(InvalidArgument):
        LandscapeParams(0.0, 1.0)


def test_correlate_H_matches_linear_hermite_coefficient():
    # single unit, P = X_1: E[f H_2(w.x)] = u2 for unit w
    net = random_network(3, 1, U, pairwise_polynomial(1), seed=1)
    ds = sample_batch(SampleOracle(net, 1), 400_000)
    tab = coeff_table(U, 4)
    assert correlate_H(ds, net.W[0], 2).agrees_with(tab[2])
    assert correlate_H(ds, net.W[0], 4).agrees_with(tab[4])
    with pytest.raises(InvalidArgument):
        correlate_H(ds, net.W[0], 3)


def test_correlation_data_drops_zero_labels_exactly(small):
    net, ds = small
    p = LandscapeParams.from_activation(U)
    z = make_rng(0).standard_normal(4)
    v1, g1 = objective_G(z, ds, p)
    v2, g2 = objective_G(z, CorrelationData(ds), p)
    assert v1 == pytest.approx(v2, rel=1e-12) and np.allclose(g1, g2, rtol=1e-10)


def _fd(fun, z, h=1e-6):
    g = np.zeros_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e.flat[i] = h
        g.flat[i] = (fun(z + e) - fun(z - e)) / (2 * h)
    return g


def test_objective_gradients_match_finite_differences(small):
    net, ds = small
    p = LandscapeParams.from_activation(U)
    rng = make_rng(4)
    for _ in range(3):
        z = rng.standard_normal(4)
        _, g = objective_G(z, ds, p)
        fd = _fd(lambda v: objective_G(v, ds, p)[0], z)
        assert np.linalg.norm(g - fd) <= 1e-4 * np.linalg.norm(g)
        W = rng.standard_normal((4, 4))
        _, G = objective_simultaneous(W, ds, p)
        FD = _fd(lambda v: objective_simultaneous(v, ds, p)[0], W)
        assert np.linalg.norm(G - FD) <= 1e-4 * np.linalg.norm(G)


def test_verify_local_min_on_quadratic():
    A = np.diag([1.0, 2.0, 3.0])
    f = lambda z: (0.5 * z @ A @ z, A @ z)  # noqa: E731
    gn, lam, ok = verify_local_min(np.zeros(3), f, 1e-6, 1e-6)
    assert ok and lam == pytest.approx(1.0, abs=1e-6)
    saddle = lambda z: (0.5 * (z[0] ** 2 - z[1] ** 2), np.array([z[0], -z[1]]))  # noqa: E731
    assert not verify_local_min(np.zeros(2), saddle, 1e-6, 1e-3)[2]
    with pytest.raises(UnsupportedMode):
        verify_local_min(np.zeros(3), f, 1, 1, cap=2)


def test_assemble_and_invert_and_alignment():
    rng = make_rng(2)
    W = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    V = np.linalg.inv(W)          # columns are the candidates
    W_hat = assemble_and_invert([V[:, i] for i in range(3)])
    al = align_and_score(W_hat[[2, 0, 1]] * np.array([[-1], [1], [1]]), W)
    assert al.max_angle < 1e-6 and sorted(al.matching.tolist()) == [0, 1, 2]
    with pytest.raises(InversionFailure):
        assemble_and_invert([np.ones(2), np.ones(2)])


def test_canonical_sign():
    assert canonical_sign(np.array([0.1, -0.9])).tolist() == [-0.1, 0.9]


def test_coverage_failure_when_restarts_too_few(small):
    net, ds = small
    p = LandscapeParams.from_activation(U, restarts=1, max_iter=5)
    with pytest.raises(CoverageFailure) as exc:
        recover_all_one_by_one(ds, p, 4, seed=0)
    assert exc.value.wanted == 4 and exc.value.found <= 1
