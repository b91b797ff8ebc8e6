"""Correlations of the label with Dirac deltas along a direction z.

C1(z, s) = E[f(x) delta(z.x - s)] = phi(s) E[f | z.x = s]. Differences of C1
across s approximate delta' (sign units: C2) and delta'' (ReLU units: C3);
both peak sharply when z is one of the planted directions and s = t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientData, InvalidArgument, UnsupportedMode
from .polynomial import SparsePolynomial
from .sampling import Dataset, SampleOracle
from .stats_core import McEstimate, mc_mean, normal_ccdf, normal_pdf, parallel_map, sub_seed


@dataclass(frozen=True)
class DeltaParams:
    eps_outer: float = 1e-3
    eps_inner: float = 1e-4
    budget: int = 200_000
    threads: int = 1

    def __post_init__(self):
        if not (self.eps_outer > 0 and self.eps_inner > 0):
            raise InvalidArgument("delta widths must be positive")
        if self.eps_inner > self.eps_outer / 10:
            raise InvalidArgument("eps_inner must be at most eps_outer / 10")
        if self.budget < 2:
            raise InvalidArgument("budget must be at least 2")


@dataclass(frozen=True)
class CorrelationProfile:
    directions: np.ndarray
    values: tuple          # McEstimate per direction
    accepted: tuple        # indices of accepted directions
    threshold: float

    @property
    def means(self) -> np.ndarray:
        return np.array([v.mean for v in self.values])


def _unit(z):
    z = np.asarray(z, dtype=float)
    r = np.linalg.norm(z)
    if not r > 0:
        raise InvalidArgument("direction must be nonzero")
    return z / r


def _slice_values(oracle: SampleOracle, z, offsets, budget: int, key: tuple):
    """Per-sample phi(s_k) f(x_k) for each slice position s_k, sharing the orthogonal draw."""
    z = _unit(z)
    net = oracle.net
    hp = SampleOracle(net, sub_seed(oracle.seed, *key), "hyperplane", z=z, s=0.0)
    B, wz = hp.orthogonal_preactivations(budget)
    out = []
    for s in offsets:
        y = net.poly.evaluate(net.activation(B + s * wz))
        out.append(normal_pdf(s) * y)
    return out


def c1_delta(source, z, s: float, p: DeltaParams, key: tuple = (0,)) -> McEstimate:
    """phi(s) E[f | z.x = s].

    With a :class:`SampleOracle` the hyperplane is sampled exactly (the phi factor
    is exact, only the conditional mean is Monte Carlo). With a fixed
    :class:`Dataset`, the thin slab [s - eps_inner, s] stands in for the delta.
    """
    if isinstance(source, Dataset):
        z = _unit(z)
        a = source.X @ z
        hit = (a >= s - p.eps_inner) & (a <= s)
        if not hit.any():
            raise InsufficientData(f"no samples in the slab [{s - p.eps_inner:.4g}, {s:.4g}]")
        return mc_mean(np.where(hit, source.y, 0.0) / p.eps_inner)
    (vals,) = _slice_values(source, z, [s], p.budget, key)
    return mc_mean(vals)


def c2_delta_prime(oracle: SampleOracle, z, s: float, p: DeltaParams, key: tuple = (0,)) -> McEstimate:
    """C1(s + eps) - C1(s - eps), estimated with common randomness across the two slices."""
    if isinstance(oracle, Dataset):
        return c1_delta(oracle, z, s + p.eps_outer, p) - c1_delta(oracle, z, s - p.eps_outer, p)
    hi, lo = _slice_values(oracle, z, [s + p.eps_outer, s - p.eps_outer], p.budget, key)
    return mc_mean(hi - lo)


def c2_normalized(oracle: SampleOracle, z, s: float, p: DeltaParams, key: tuple = (0,)) -> McEstimate:
    """C2 / (2 eps): the finite-difference derivative of C1 in s."""
    return c2_delta_prime(oracle, z, s, p, key).scaled(1.0 / (2.0 * p.eps_outer))


def c3_relu(oracle: SampleOracle, z, s: float, p: DeltaParams, key: tuple = (0,)) -> McEstimate:
    """(C1(s + eps) - 2 C1(s) + C1(s - eps)) / eps."""
    if oracle.net.activation.kind != "relu-threshold":
        raise UnsupportedMode("C3 is defined for ReLU activations")
    e = p.eps_outer
    hi, mid, lo = _slice_values(oracle, z, [s + e, s, s - e], p.budget, key)
    return mc_mean((hi - 2.0 * mid + lo) / e)


def direction_scan(oracle: SampleOracle, candidates, t: float, p: DeltaParams, eps3: float,
                   kind: str = "c2", s: float | None = None) -> CorrelationProfile:
    """Evaluate C2 (or C3) for every candidate and accept values >= phi(t) eps3 / 2."""
    cands = np.array([_unit(c) for c in candidates])
    if cands.size == 0:
        raise InvalidArgument("candidate list is empty")
    fn = {"c2": c2_delta_prime, "c3": c3_relu}[kind]
    s = t if s is None else s
    vals = parallel_map(lambda i: fn(oracle, cands[i], s, p, key=(i,)), list(range(len(cands))), p.threads)
    thr = normal_pdf(t) * eps3 / 2.0
    acc = tuple(i for i, v in enumerate(vals) if v.mean >= thr)
    return CorrelationProfile(cands, tuple(vals), acc, thr)


def corollary_peak(P: SparsePolynomial, i: int, t: float) -> float:
    """phi(t)/mu times the X_i coefficient of P(mu (X + 1)), mu = Phi^c(t).

    For orthogonal planted directions this is the population C2 peak
    phi(t) E[Q_i] at z = w_i, s = t.
    """
    mu = normal_ccdf(t)
    coef = P.substitute_shifted(mu).linear_coeffs(max(P.num_vars, i + 1))[i]
    return normal_pdf(t) / mu * coef


def expected_q(P: SparsePolynomial, i: int, t: float) -> float:
    """E[Q_i] for orthogonal sign units: Q_i evaluated at X_j = Phi^c(t)."""
    Q = P.partial_derivative(i)
    mu = normal_ccdf(t)
    d = max(P.num_vars, 1)
    return float(Q.evaluate(np.full(d, mu)))


def random_directions(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((count, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def angle_profile(oracle: SampleOracle, w, perp, angles_deg, s: float, p: DeltaParams):
    """C2 along a great circle from w towards perp, for the monotonicity check."""
    w, perp = _unit(w), _unit(perp)
    out = []
    for k, a in enumerate(angles_deg):
        r = math.radians(a)
        out.append(c2_delta_prime(oracle, math.cos(r) * w + math.sin(r) * perp, s, p, key=(10_000 + k,)))
    return out
