import itertools
import math

import numpy as np
import pytest

from hithresh.activations import ActivationSpec
from hithresh.errors import PreconditionFailure, StructureViolation, VarianceFailure
from hithresh.network import PlantedNetwork, random_network
from hithresh.polynomial import SparsePolynomial
from hithresh.sampling import Dataset, SampleOracle, sample_batch
from hithresh.stats_core import make_rng
from hithresh.structural import (CorrelationGraph, SupportFamily, binary_support_network, build_graph,
                                 even_coefficients, even_recover, exp_ascent, exp_objective, extract_cliques,
                                 pairwise_correlations, suggest_threshold, symbolic_alpha)


def graph_from_edges(n, edges):
    V = np.zeros((n, n))
    for i, j in edges:
        V[i, j] = V[j, i] = 1.0
    return build_graph(CorrelationGraph(V, V * 0), 0.5)


def test_cliques_of_two_triangles():
    g = graph_from_edges(7, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
    fam = extract_cliques(g)
    assert fam == SupportFamily((frozenset({3, 4, 5}), frozenset({0, 1, 2})))


def test_path_is_a_violation():
    with pytest.raises(StructureViolation) as exc:
        extract_cliques(graph_from_edges(3, [(0, 1), (1, 2)]))
    assert exc.value.component == [0, 1, 2]


def test_relabeling_equivariance():
    edges = [(0, 1), (1, 2), (0, 2), (4, 5)]
    perm = [5, 3, 0, 1, 2, 4]
    a = extract_cliques(graph_from_edges(6, edges))
    b = extract_cliques(graph_from_edges(6, [(perm[i], perm[j]) for i, j in edges]))
    assert {frozenset(perm[i] for i in S) for S in a.supports} == b.as_sets()


def test_empty_graph_and_threshold():
    V = np.full((3, 3), 0.1)
    np.fill_diagonal(V, 0)
    g = build_graph(CorrelationGraph(V, V * 0), 0.5)
    assert g.edges == [] and extract_cliques(g).supports == ()


def test_edgelist_export(tmp_path):
    g = graph_from_edges(3, [(0, 2)])
    g.export_edgelist(tmp_path / "g.txt")
    assert (tmp_path / "g.txt").read_text().split() == ["0", "2", "1.0"]


def test_pair_alpha_matches_derivation():
    rho, t = 0.25, 0.5
    net = binary_support_network(4, [{0, 1}], ActivationSpec("exp-rate", t, rho),
                                 SparsePolynomial.from_sets(0.0, {(0,): 1.0}), 0)
    closed = rho ** 2 * math.exp(-rho * t) * math.exp(rho ** 2)
    assert symbolic_alpha(net, 0, 1) == pytest.approx(closed)
    g = pairwise_correlations(sample_batch(SampleOracle(net, 0), 400_000))
    assert abs(g.values[0, 1] - closed) <= 3 * g.stderr[0, 1]
    assert abs(g.values[0, 3]) <= 3 * g.stderr[0, 3]


def test_constant_label_has_zero_correlations():
    X = make_rng(0).standard_normal((10_000, 4))
    g = pairwise_correlations(Dataset(X, np.full(10_000, 3.0)))
    assert np.allclose(g.values, 0.0)


def test_exp_objective_gradient():
    net = binary_support_network(4, [{0, 1}], ActivationSpec("exp-rate", 0.0, 0.25),
                                 SparsePolynomial.from_sets(0.0, {(0,): 1.0}), 0)
    ds = sample_batch(SampleOracle(net, 0), 10_000)
    z = np.array([0.3, 0.5, 0.2, 0.4])
    _, g = exp_objective(z, ds, 0.1, 0.05)
    fd = np.array([(exp_objective(z + e, ds, 0.1, 0.05)[0] - exp_objective(z - e, ds, 0.1, 0.05)[0]) / 2e-6
                   for e in np.eye(4) * 1e-6])
    assert np.linalg.norm(g - fd) <= 1e-4 * np.linalg.norm(g)


def test_exp_ascent_single_support():
    net = binary_support_network(4, [{0, 1}], ActivationSpec("exp-rate", 0.0, 0.25),
                                 SparsePolynomial.from_sets(0.0, {(0,): 1.0}), 0)
    from hithresh.structural import default_exp_penalties
    lam, gam = default_exp_penalties(net)
    ds = sample_batch(SampleOracle(net, 4), 200_000)
    for r in exp_ascent(ds, lam, gam, 2, seed=4):
        assert r.support == frozenset({0, 1})
        assert r.z[0] >= 1 and r.z[1] >= 1 and r.z[2] <= 0.1 and r.z[3] <= 0.1
        assert abs(r.z[0] - r.z[1]) <= 0.1


def test_exp_ascent_heavy_tail_guard():
    net = binary_support_network(4, [{0, 1}], ActivationSpec("exp-plain"),
                                 SparsePolynomial.from_sets(0.0, {(0,): 1.0}), 0)
    ds = sample_batch(SampleOracle(net, 4), 50_000)
    with pytest.raises(VarianceFailure):
        exp_ascent(ds, 1.0, 0.05, 1, seed=0)


EVEN = ActivationSpec("custom-even", cap=1.0)


def test_even_coefficients_single_terms():
    ec = even_coefficients(SparsePolynomial.from_sets(0.0, {(0,): 2.0}), EVEN)
    assert ec.gamma == {}
    assert ec.alpha[0] == pytest.approx(2 * ec.u4)
    assert ec.beta[0] == pytest.approx(2 * math.sqrt(3) * ec.u2)
    ec = even_coefficients(SparsePolynomial.from_sets(0.0, {(0, 1): 1.0}), EVEN)
    assert ec.alpha[0] == pytest.approx(ec.u4 * ec.u0)
    assert ec.gamma[(0, 1)] == pytest.approx(math.sqrt(6) * ec.u2 ** 2)


def test_even_coefficients_linear_in_P():
    P = SparsePolynomial.from_sets(0.5, {(0,): 1.0, (1,): -0.3, (0, 1): 0.7, (0, 1, 2): 0.2})
    a, b = even_coefficients(P, EVEN), even_coefficients(P.scale(2.0), EVEN)
    assert np.allclose(b.vector(), 2 * a.vector())


def test_even_coefficient_prediction_by_quadrature():
    # E[f h4(z.x)] for orthonormal units against 3-d tensor Gauss quadrature,
    # using a smooth even activation so the quadrature is exact to ~1e-12
    u = ActivationSpec("custom-even", fn=np.cos)
    P = SparsePolynomial.from_sets(0.3, {(0,): 1.0, (1,): 0.5, (0, 1): 0.8, (1, 2): -0.4, (0, 1, 2): 0.6})
    ec = even_coefficients(P, u, 3)
    x, w = np.polynomial.hermite_e.hermegauss(40)
    w = w / math.sqrt(2 * math.pi)
    G = np.stack(np.meshgrid(x, x, x, indexing="ij"), -1).reshape(-1, 3)
    Wt = np.einsum("i,j,k->ijk", w, w, w).ravel()
    f = P.evaluate(u(G))
    for z in make_rng(0).standard_normal((5, 3)) * 0.7:
        a = G @ z
        val = np.sum(Wt * f * (a ** 4 - 6 * a ** 2 + 3) / math.sqrt(24))
        assert val == pytest.approx(ec.predict(z)[0], abs=1e-9)


def test_even_gate_and_refusal():
    with pytest.raises(PreconditionFailure):
        even_coefficients(SparsePolynomial.from_sets(0.0, {(0,): 1.0}), ActivationSpec("sign-threshold", 1.0))
    P = SparsePolynomial.from_sets(0.0, {(0,): 1.0, (1,): 1.0, (0, 1): -20.0})
    ec = even_coefficients(P, EVEN)
    assert (0, 1) in ec.violations()
    ds = Dataset(np.zeros((10, 2)), np.zeros(10))
    with pytest.raises(PreconditionFailure) as exc:
        even_recover(ds, 2, seed=0, coeffs=ec)
    assert exc.value.pair == (0, 1)


def test_even_recover_d2_with_dedup():
    P = SparsePolynomial.from_sets(0.0, {(0,): 1.0, (1,): 1.0})
    net = random_network(2, 2, EVEN, P, seed=6)
    ds = sample_batch(SampleOracle(net, 6), 300_000)
    Z = even_recover(ds, 2, seed=6, restarts=10, coeffs=even_coefficients(P, EVEN))
    assert Z.shape == (2, 2)
    from hithresh.landscape import align_and_score
    assert align_and_score(Z, net.W).max_angle <= 5.0
