"""Recovery under structural assumptions on the weights or the activation.

* Disjoint 0/1 supports with exponential activations: the second moments
  E[f x_i x_j] are large exactly when i and j share a support, so the supports
  are the cliques of a thresholded correlation graph.
* Exponential activation without threshold: an l1/l2-penalized ascent on
  g(z) = E[f e^{z.x}] e^{-|z|^2/2} concentrates on one support.
* Even activations: E[f h_4(z.x)] is a quartic in z whose coefficients are
  computable from P and the activation's Hermite coefficients.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .activations import ActivationSpec
from .errors import InvalidArgument, PreconditionFailure, StructureViolation, VarianceFailure
from .hermite import coeff_table
from .landscape import canonical_sign, random_unit
from .network import PlantedNetwork
from .polynomial import SparsePolynomial
from .sampling import Dataset
from .stats_core import make_rng, parallel_map

SQRT3 = math.sqrt(3.0)
SQRT6 = math.sqrt(6.0)
SQRT24 = math.sqrt(24.0)


# --------------------------------------------------------------------------
# correlation graph

@dataclass(frozen=True)
class CorrelationGraph:
    values: np.ndarray          # symmetric alpha_ij, zero diagonal
    stderr: np.ndarray
    rho_g: float | None = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def edges(self) -> list[tuple[int, int]]:
        if self.rho_g is None:
            return []
        iu = np.triu_indices(self.n, 1)
        keep = self.values[iu] >= self.rho_g
        return list(zip(iu[0][keep].tolist(), iu[1][keep].tolist()))

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            A[i, j] = A[j, i] = True
        return A

    def export_edgelist(self, path) -> None:
        """Weighted edge list, one 'i j alpha' line per edge (0-based nodes)."""
        lines = [f"{i} {j} {float(self.values[i, j])!r}" for i, j in self.edges]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


@dataclass(frozen=True)
class SupportFamily:
    supports: tuple  # tuple of frozensets

    def __post_init__(self):
        seen: set = set()
        for S in self.supports:
            if not S:
                raise InvalidArgument("supports must be nonempty")
            if seen & S:
                raise InvalidArgument("supports must be disjoint")
            seen |= S

    def as_sets(self) -> set:
        return set(self.supports)

    def __eq__(self, other):
        return isinstance(other, SupportFamily) and self.as_sets() == other.as_sets()

    def __hash__(self):
        return hash(frozenset(self.supports))


def pairwise_correlations(data: Dataset, chunk: int = 200_000) -> CorrelationGraph:
    """E[f x_i x_j] for i != j with standard errors.

    The label is centered by its sample mean first; since E[x_i x_j] = 0 for
    i != j this leaves the target unchanged and removes the bulk of the
    variance contributed by the mean of f.
    """
    X, y = data.X, data.y
    N, n = X.shape
    yc = y - y.mean()
    S1 = np.zeros((n, n))
    S2 = np.zeros((n, n))
    for a in range(0, N, chunk):
        Xb = X[a:a + chunk]
        w = yc[a:a + chunk]
        S1 += Xb.T @ (Xb * w[:, None])
        X2 = Xb * Xb
        S2 += X2.T @ (X2 * (w * w)[:, None])
    alpha = S1 / N
    var = np.clip(S2 / N - alpha ** 2, 0.0, None) * N / max(N - 1, 1)
    se = np.sqrt(var / N)
    np.fill_diagonal(alpha, 0.0)
    np.fill_diagonal(se, 0.0)
    alpha = 0.5 * (alpha + alpha.T)
    return CorrelationGraph(alpha, se)


def build_graph(graph: CorrelationGraph, rho_g: float) -> CorrelationGraph:
    if not rho_g > 0:
        raise InvalidArgument("graph threshold must be positive")
    return CorrelationGraph(graph.values, graph.stderr, float(rho_g))


def suggest_threshold(graph: CorrelationGraph) -> float:
    """Midpoint of the widest gap among the sorted off-diagonal values."""
    v = np.sort(graph.values[np.triu_indices(graph.n, 1)])
    gaps = np.diff(v)
    k = int(np.argmax(gaps))
    return float(0.5 * (v[k] + v[k + 1]))


def support_gap(graph: CorrelationGraph, family: SupportFamily) -> tuple[float, float]:
    """(smallest within-support alpha, largest cross-support alpha)."""
    label = -np.ones(graph.n, dtype=int)
    for k, S in enumerate(family.supports):
        for i in S:
            label[i] = k
    within, cross = [], []
    for i, j in itertools.combinations(range(graph.n), 2):
        if label[i] >= 0 and label[i] == label[j]:
            within.append(graph.values[i, j])
        else:
            cross.append(graph.values[i, j])
    return (min(within) if within else math.nan, max(cross) if cross else math.nan)


def extract_cliques(graph: CorrelationGraph) -> SupportFamily:
    """Connected components of the edge graph, each required to be complete.

    Isolated nodes are not supports.
    """
    A = graph.adjacency()
    ncomp, lab = connected_components(csr_matrix(A), directed=False)
    out = []
    for c in range(ncomp):
        nodes = np.flatnonzero(lab == c)
        if nodes.size < 2:
            continue
        sub = A[np.ix_(nodes, nodes)]
        if not np.all(sub | np.eye(nodes.size, dtype=bool)):
            raise StructureViolation(f"component {nodes.tolist()} is not a clique", component=nodes.tolist())
        out.append(frozenset(int(i) for i in nodes))
    return SupportFamily(tuple(sorted(out, key=min)))


def binary_support_network(n: int, supports, activation: ActivationSpec, poly: SparsePolynomial,
                           seed: int | None = None) -> PlantedNetwork:
    W = np.zeros((len(supports), n))
    for i, S in enumerate(supports):
        W[i, list(S)] = 1.0
    return PlantedNetwork(W, activation, poly, seed, unit_rows=False)


def symbolic_alpha(net: PlantedNetwork, i: int, j: int) -> float:
    """Population E[f x_i x_j] for exp-rate units on disjoint 0/1 supports.

    f = sum_S c_S exp(-rho t |S|) exp(rho sum_{p in U_S} x_p), U_S the union
    of the supports in S; for i, j in U_S the expectation of
    x_i x_j exp(rho sum_U x_p) is rho^2 exp(rho^2 |U_S| / 2).
    """
    a = net.activation
    if a.kind not in ("exp-rate", "exp-plain"):
        raise InvalidArgument("symbolic alpha is derived for exponential activations")
    rho = a.rate if a.kind == "exp-rate" else 1.0
    supp = [set(np.flatnonzero(row).tolist()) for row in net.W]
    total = 0.0
    for mono, c in net.poly.terms.items():
        units = [u for u, _ in mono]
        U = set().union(*(supp[u] for u in units))
        if i in U and j in U:
            total += c * math.exp(-rho * a.t * len(units)) * math.exp(rho * rho * len(U) / 2.0)
    return rho * rho * total


# --------------------------------------------------------------------------
# exponential ascent

@dataclass(frozen=True)
class AscentResult:
    z: np.ndarray
    support: frozenset
    iterations: int
    value: float


def exp_objective(z, data: Dataset, lam: float, gamma: float, heavy_tail: float = 0.5):
    """Empirical h(z) = e^{-|z|^2/2} mean(f e^{z.x}) - lam |z|_1 - gamma |z|^2 and its gradient."""
    z = np.asarray(z, dtype=float)
    a = data.X @ z
    m = a.max()
    e = np.exp(a - m)
    wts = data.y * e
    tot = wts.sum()
    if tot > 0:
        top = np.sort(np.abs(wts))[-max(1, len(wts) // 100):].sum()
        if top / np.abs(wts).sum() > heavy_tail:
            raise VarianceFailure(f"top 1% of samples carry {top / np.abs(wts).sum():.0%} of the mass")
    scale = math.exp(m - 0.5 * float(z @ z)) / len(wts)
    g = tot * scale
    grad_g = (data.X.T @ wts) * scale - z * g
    h = g - lam * float(np.abs(z).sum()) - gamma * float(z @ z)
    grad = grad_g - lam * np.sign(z) - 2.0 * gamma * z
    return h, grad


def exp_ascent(data: Dataset, lam: float, gamma: float, restarts: int, seed: int, step: float = 0.02,
               max_iter: int = 2000, cap: float = 1.0, threshold: float = 0.5, start: float = 0.25,
               threads: int = 1) -> list[AscentResult]:
    """Projected gradient ascent on h with z >= 0, one candidate support per restart.

    h grows without bound along a support (exponential gain against quadratic
    penalty), so each run stops once every coordinate above ``threshold`` has
    reached ``cap``; off-support coordinates have been driven to zero by then.
    """
    n = data.n

    def run(r: int) -> AscentResult:
        rng = make_rng(seed, r)
        z = start + 0.05 * rng.random(n)
        it = 0
        h = math.nan
        for it in range(1, max_iter + 1):
            h, g = exp_objective(z, data, lam, gamma)
            z = np.maximum(z + step * g, 0.0)
            live = z[z >= threshold]
            if live.size and live.min() >= cap:
                break
        supp = frozenset(np.flatnonzero(z >= threshold).tolist())
        return AscentResult(z, supp, it, h)

    return parallel_map(run, list(range(restarts)), threads)


def default_exp_penalties(net: PlantedNetwork) -> tuple[float, float]:
    """lam at half the smallest per-unit gain at z = 0; gamma = 0.05.

    For u(a) = e^{rho (a - t)} on 0/1 supports the population objective is
    g(z) = sum_S c_S e^{-rho t |S|} prod_{p in U_S} e^{rho^2/2 + rho z_p},
    so the coordinate gain at z = 0 is rho times the bracket below.
    """
    a = net.activation
    rho = a.rate if a.kind == "exp-rate" else 1.0
    supp = [np.flatnonzero(row).size for row in net.W]
    gains = []
    for u in range(net.d):
        g = 0.0
        for mono, c in net.poly.terms.items():
            units = [v for v, _ in mono]
            if u in units:
                g += c * math.exp(-rho * a.t * len(units) + rho * rho * sum(supp[v] for v in units) / 2.0)
        gains.append(rho * g)
    return 0.5 * min(gains), 0.05


# --------------------------------------------------------------------------
# even activations

@dataclass(frozen=True)
class EvenCoeffs:
    """E[f h_4(z.x)] = sum a_i z_i^4 + sum b_i z_i^2 (|z|^2 - 1) + sum g_ij z_i^2 z_j^2 + k (|z|^2 - 1)^2.

    Valid for orthonormal planted directions (z expressed in that basis).
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: dict
    kappa: float
    u0: float
    u2: float
    u4: float
    C: dict = field(default_factory=dict)

    def predict(self, Z) -> np.ndarray:
        Z = np.atleast_2d(Z)
        return even_design(Z, len(self.alpha)) @ self.vector()

    def vector(self) -> np.ndarray:
        d = len(self.alpha)
        pairs = [self.gamma.get((i, j), 0.0) for i, j in itertools.combinations(range(d), 2)]
        return np.concatenate([self.alpha, self.beta, pairs, [self.kappa]])

    @property
    def sign(self) -> float:
        return 1.0 if self.u4 >= 0 else -1.0

    def violations(self) -> list[tuple[int, int]]:
        """Pairs where the axes fail to be the maxima of sign(u4) E[f h_4] on the sphere."""
        s = self.sign
        d = len(self.alpha)
        return [(i, j) for i, j in itertools.combinations(range(d), 2)
                if not s * (self.alpha[i] + self.alpha[j] - self.gamma.get((i, j), 0.0)) > 0]


def even_design(Z, d: int) -> np.ndarray:
    """Feature matrix [z_i^4 | z_i^2 (r^2 - 1) | z_i^2 z_j^2 | (r^2 - 1)^2] for rows of Z."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))[:, :d]
    r2m1 = (Z * Z).sum(axis=1) - 1.0
    cols = [Z ** 4, Z ** 2 * r2m1[:, None]]
    pairs = [Z[:, i] ** 2 * Z[:, j] ** 2 for i, j in itertools.combinations(range(d), 2)]
    cols.append(np.column_stack(pairs) if pairs else np.zeros((Z.shape[0], 0)))
    cols.append((r2m1 ** 2)[:, None])
    return np.hstack(cols)


def coverage_sum(P: SparsePolynomial, S, mu: float) -> float:
    """C(S, mu) = sum over monomials S' containing S of c_S' mu^|S'| (constant term when S is empty)."""
    need = set(S)
    total = P.c0 if not need else 0.0
    for mono, c in P.terms.items():
        idx = {i for i, _ in mono}
        if need <= idx:
            total += c * mu ** len(idx)
    return total


def even_coefficients(P: SparsePolynomial, u: ActivationSpec, d: int | None = None) -> EvenCoeffs:
    """Quartic coefficients of E[f h_4(z.x)] from P and u's Hermite coefficients."""
    if not u.is_even:
        raise PreconditionFailure("even_coefficients needs an even activation (custom-even, t = 0)")
    if not P.degree1:
        raise PreconditionFailure("even_coefficients needs a degree-1 polynomial")
    tab = coeff_table(u, 4)
    u0, u2, u4 = tab[0], tab[2], tab[4]
    d = d if d is not None else P.num_vars
    alpha = np.zeros(d)
    beta = np.zeros(d)
    gamma: dict = {}
    for mono, c in P.terms.items():
        idx = [i for i, _ in mono]
        k = len(idx)
        for i in idx:
            alpha[i] += u4 * c * u0 ** (k - 1)
            beta[i] += SQRT3 * u2 * c * u0 ** (k - 1)
        for i, j in itertools.combinations(sorted(idx), 2):
            gamma[(i, j)] = gamma.get((i, j), 0.0) + SQRT6 * u2 * u2 * c * u0 ** (k - 2)
    kappa = SQRT6 / 4.0 * coverage_sum(P, (), u0)
    C = {(i,): coverage_sum(P, (i,), u0) for i in range(d)}
    C.update({(i, j): coverage_sum(P, (i, j), u0) for i, j in itertools.combinations(range(d), 2)})
    return EvenCoeffs(alpha, beta, gamma, kappa, u0, u2, u4, C)


def h4_correlation(data: Dataset, Z) -> tuple[np.ndarray, np.ndarray]:
    """MC E[y h_4(z.x)] for each row z of Z (unweighted h_4), with per-sample values for error propagation."""
    A = data.X @ np.atleast_2d(Z).T
    H = (A ** 4 - 6.0 * A ** 2 + 3.0) / SQRT24
    V = data.y[:, None] * H
    return V.mean(axis=0), V


def fit_even_coefficients(data: Dataset, Z, d: int):
    """Least-squares fit of the quartic model to MC correlations on the rows of Z.

    Returns (coefficients, stderr). Both come from projecting the per-sample
    correlation vectors through the pseudo-inverse of the design matrix, so
    the stderr accounts for correlation across grid points.
    """
    D = even_design(Z, d)
    Pinv = np.linalg.pinv(D)
    _, V = h4_correlation(data, Z)
    per = V @ Pinv.T                 # per-sample coefficient vectors
    coef = per.mean(axis=0)
    se = per.std(axis=0, ddof=1) / math.sqrt(per.shape[0])
    return coef, se


def even_recover(data: Dataset, d: int, seed: int, restarts: int | None = None, coeffs: EvenCoeffs | None = None,
                 sign: float | None = None, max_iter: int = 100, dedup: float = 0.9, tol: float = 1e-7):
    """Maximize sign * E[f h_4(z.x)] over the unit sphere from random starts.

    When ``coeffs`` is given the axis-maximum condition is checked first and a
    violation is refused with the offending pair.
    """
    if coeffs is not None:
        bad = coeffs.violations()
        if bad:
            i, j = bad[0]
            raise PreconditionFailure(f"axis condition fails for pair ({i + 1}, {j + 1})", pair=(i, j))
        sign = coeffs.sign if sign is None else sign
    sign = 1.0 if sign is None else sign
    restarts = restarts if restarts is not None else 5 * d
    keep = data.y != 0
    X, y, N = data.X[keep], data.y[keep], len(data)
    c0_part = data.y[~keep].sum()  # zero by construction; kept for clarity

    def F(z):
        a = X @ z
        val = (y @ (a ** 4 - 6.0 * a ** 2 + 3.0) + 3.0 * c0_part) / (SQRT24 * N)
        g = X.T @ (y * (4.0 * a ** 3 - 12.0 * a)) / (SQRT24 * N)
        return sign * val, sign * g

    found = []
    for r in range(restarts):
        rng = make_rng(seed, r)
        z = random_unit(rng, data.n)
        val, g = F(z)
        step = 1.0
        for _ in range(max_iter):
            rg = g - (g @ z) * z
            if np.linalg.norm(rg) < tol:
                break
            while step > 1e-12:
                cand = z + step * rg
                cand /= np.linalg.norm(cand)
                cval, cg = F(cand)
                if cval >= val + 1e-4 * step * float(rg @ rg):
                    break
                step *= 0.5
            else:
                break
            gain = cval - val
            z, val, g = cand, cval, cg
            step *= 2.0
            if gain < tol * max(abs(val), 1.0):
                break
        u = canonical_sign(z)
        if all(abs(u @ k) < dedup for k in found):
            found.append(u)
        if len(found) == d:
            break
    if len(found) < d:
        from .errors import CoverageFailure
        raise CoverageFailure(f"found {len(found)} of {d} directions", found=len(found), wanted=d)
    return np.array(found)
