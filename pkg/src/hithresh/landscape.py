"""Landscape-design recovery from fourth and second Hermite correlations.

One-by-one mode minimizes

    G(z) = -sgn(u4) E[f H_4(z.x)] + lam (E[f H_2(z.x)] - u2)^2

whose local minima are (scaled) columns of (T W*)^{-1}; simultaneous mode
minimizes a pairwise objective over the whole matrix W. Every expectation is
the empirical mean over one fixed dataset, so gradients are exact for the
objective actually optimized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from .activations import ActivationSpec
from .errors import CoverageFailure, DomainError, InvalidArgument, InversionFailure, NumericFailure, UnsupportedMode
from .hermite import coeff_table, weighted_h_eval
from .sampling import Dataset
from .stats_core import McEstimate, make_rng, mc_mean, parallel_map

SQRT2 = math.sqrt(2.0)
SQRT24 = math.sqrt(24.0)


@dataclass(frozen=True)
class LandscapeParams:
    """Objective constants and optimizer settings.

    ``lam`` defaults to ``lam_multiplier * |u4| / u2**2``. ``eps`` / ``tau``
    default to small fractions of |u4|, the natural scale of G's gradient and
    curvature near its minima.
    """

    u2: float
    u4: float
    lam: float | None = None
    lam_multiplier: float = 1.0
    gamma: float = 0.01
    max_iter: int = 400
    restarts: int = 5
    eps: float | None = None
    tau: float | None = None
    max_norm: float = 10.0
    hessian_cap: int = 64
    threads: int = 1

    def __post_init__(self):
        if self.u2 == 0 or self.u4 == 0:
            raise InvalidArgument("landscape objective needs u2 != 0 and u4 != 0")
        if self.lam is not None and not self.lam > 0:
            raise InvalidArgument("lambda must be positive")
        if not 0 < self.gamma <= 0.01:
            raise InvalidArgument("gamma must lie in (0, 0.01]")

    @classmethod
    def from_activation(cls, u: ActivationSpec, **kw) -> "LandscapeParams":
        tab = coeff_table(u, 4)
        return cls(u2=tab[2], u4=tab[4], **kw)

    @property
    def lam_value(self) -> float:
        if self.lam is not None:
            return self.lam
        return self.lam_multiplier * abs(self.u4) / self.u2 ** 2

    @property
    def sign4(self) -> float:
        return 1.0 if self.u4 > 0 else -1.0

    @property
    def eps_value(self) -> float:
        return self.eps if self.eps is not None else 1e-3 * abs(self.u4)

    @property
    def tau_value(self) -> float:
        return self.tau if self.tau is not None else 0.05 * abs(self.u4)


@dataclass(frozen=True)
class CandidateDirection:
    z: np.ndarray
    value: float
    grad_norm: float
    min_eig: float
    certified: bool
    iterations: int = 0

    @property
    def direction(self) -> np.ndarray:
        return canonical_sign(self.z / np.linalg.norm(self.z))


@dataclass(frozen=True)
class DiagonalScaling:
    entries: np.ndarray

    def __post_init__(self):
        if np.any(~(np.asarray(self.entries) > 0)):
            raise InvalidArgument("diagonal scaling needs c_i > 0")

    @classmethod
    def from_coeffs(cls, c) -> "DiagonalScaling":
        c = np.asarray(c, dtype=float)
        if np.any(c <= 0):
            raise InvalidArgument("diagonal scaling needs c_i > 0")
        return cls(np.sqrt(c))

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.entries)


# --------------------------------------------------------------------------
# correlation data

class CorrelationData:
    """Dataset view that keeps only samples with y != 0.

    Rows with zero label contribute nothing to E[y g(x)], so dropping them is
    exact; at high thresholds this removes most of the data.
    """

    def __init__(self, data: Dataset):
        if len(data) == 0:
            raise InvalidArgument("empty dataset")
        keep = data.y != 0
        self.N = len(data)
        if keep.mean() < 0.5:
            self.X = np.ascontiguousarray(data.X[keep])
            self.y = np.ascontiguousarray(data.y[keep])
        else:
            self.X, self.y = data.X, data.y
        self.ybar = float(self.y.sum() / self.N)
        self.n = data.n


DataLike = Union[Dataset, CorrelationData]


def _prep(data: DataLike) -> CorrelationData:
    return data if isinstance(data, CorrelationData) else CorrelationData(data)


def correlate_H(data: DataLike, z, k: int) -> McEstimate:
    """Sample mean of y H_k^{||z||}(z.x) with its standard error."""
    if k not in (2, 4):
        raise InvalidArgument("correlate_H supports k in {2, 4}")
    z = np.asarray(z, dtype=float)
    r = float(np.linalg.norm(z))
    if not r > 0:
        raise DomainError("correlate_H needs a nonzero direction")
    if isinstance(data, CorrelationData):
        raise InvalidArgument("correlate_H needs the full dataset for its standard error")
    vals = data.y * weighted_h_eval(k, r, data.X @ z)
    return mc_mean(vals)


def _h2_h4_grads(z, cd: CorrelationData):
    """Empirical E[y H_2], E[y H_4] and their gradients in z."""
    a = cd.X @ z
    s = float(z @ z)
    y = cd.y
    N = cd.N
    a2 = a * a
    ya = y * a
    E2 = (float(ya @ a) - s * cd.ybar * N) / (SQRT2 * N)
    ya2 = ya * a
    E4 = (float(ya2 @ a2) - 6.0 * s * float(ya2.sum()) + 3.0 * s * s * cd.ybar * N) / (SQRT24 * N)
    g2 = (2.0 * (cd.X.T @ ya) - 2.0 * z * cd.ybar * N) / (SQRT2 * N)
    w4 = 4.0 * ya2 * a - 12.0 * s * ya
    g4 = (cd.X.T @ w4 + z * (-12.0 * float(ya2.sum()) + 12.0 * s * cd.ybar * N)) / (SQRT24 * N)
    return E2, E4, g2, g4


def objective_G(z, data: DataLike, p: LandscapeParams):
    """(G(z), grad G(z)) for the empirical one-by-one objective."""
    cd = _prep(data)
    z = np.asarray(z, dtype=float)
    E2, E4, g2, g4 = _h2_h4_grads(z, cd)
    lam = p.lam_value
    dev = E2 - p.u2
    val = -p.sign4 * E4 + lam * dev * dev
    grad = -p.sign4 * g4 + 2.0 * lam * dev * g2
    if not (math.isfinite(val) and np.all(np.isfinite(grad))):
        raise NumericFailure(f"non-finite objective at |z|={np.linalg.norm(z):.3g}", last_estimate=val)
    return val, grad


# --------------------------------------------------------------------------
# certification

def fd_hessian(grad_fn: Callable, z, h: float | None = None) -> np.ndarray:
    """Symmetrized central-difference Hessian of an exact gradient."""
    z = np.asarray(z, dtype=float)
    n = z.size
    h = h if h is not None else 1e-5 * max(1.0, float(np.linalg.norm(z)))
    H = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        H[:, i] = (grad_fn(z + e) - grad_fn(z - e)) / (2.0 * h)
    return 0.5 * (H + H.T)


def verify_local_min(z, objective: Callable, eps: float, tau: float, cap: int = 64):
    """(gradient norm, smallest Hessian eigenvalue, ok) for an (eps, tau)-local minimum.

    ``objective`` maps z to (value, gradient). ok means grad norm <= eps and
    min eigenvalue >= -tau.
    """
    z = np.asarray(z, dtype=float)
    if z.size > cap:
        raise UnsupportedMode(f"dense Hessian limited to dimension {cap}, got {z.size}")
    _, g = objective(z)
    gn = float(np.linalg.norm(g))
    H = fd_hessian(lambda v: objective(v)[1], z)
    lam_min = float(np.linalg.eigvalsh(H)[0])
    return gn, lam_min, bool(gn <= eps and lam_min >= -tau)


# --------------------------------------------------------------------------
# optimization

def _descend(fun: Callable, z0, eps: float, max_iter: int, max_norm: float = math.inf):
    """Gradient descent with Armijo step halving and step growth after success."""
    z = np.array(z0, dtype=float)
    val, g = fun(z)
    gn = float(np.linalg.norm(g))
    step = 1.0 / max(gn, 1e-300) * 0.1 * max(1.0, np.linalg.norm(z))
    it = 0
    while it < max_iter and gn > eps and np.linalg.norm(z) <= max_norm:
        it += 1
        for _ in range(60):
            cand = z - step * g
            cval, cg = fun(cand)
            if cval <= val - 1e-4 * step * gn * gn:
                break
            step *= 0.5
        else:
            break
        z, val, g = cand, cval, cg
        gn = float(np.linalg.norm(g))
        step *= 2.0
    return z, val, gn, it


def random_unit(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def minimize_one(data: DataLike, p: LandscapeParams, seed: int, *keys: int) -> CandidateDirection:
    """Descend G from a uniform random unit start and certify the end point."""
    cd = _prep(data)
    rng = make_rng(seed, *keys)
    z0 = random_unit(rng, cd.n)
    fun = lambda v: objective_G(v, cd, p)  # noqa: E731
    z, val, gn, it = _descend(fun, z0, p.eps_value, p.max_iter, p.max_norm)
    gn, lam_min, ok = verify_local_min(z, fun, p.eps_value, p.tau_value, p.hessian_cap)
    return CandidateDirection(z, val, gn, lam_min, ok, it)


def canonical_sign(v):
    """Flip v so that its largest-magnitude coordinate is positive."""
    v = np.asarray(v, dtype=float)
    return v if v[np.argmax(np.abs(v))] >= 0 else -v


def recover_all_one_by_one(data: Union[DataLike, Callable[[int], DataLike]], p: LandscapeParams, d: int,
                           seed: int, dedup: float = 0.9) -> list[CandidateDirection]:
    """Run up to ``p.restarts`` descents until d distinct directions are found.

    ``data`` is a fixed dataset or a callable mapping a restart index to a
    freshly drawn dataset. Restarts are processed in waves of ``p.threads``
    and merged in index order, so the result does not depend on scheduling.
    """
    if d < 1:
        raise InvalidArgument("d must be >= 1")
    fixed = None if callable(data) else _prep(data)

    def run(r: int) -> CandidateDirection:
        cd = fixed if fixed is not None else _prep(data(r))
        return minimize_one(cd, p, seed, r)

    kept: list[CandidateDirection] = []
    r = 0
    wave = max(1, p.threads)
    while len(kept) < d and r < p.restarts:
        idx = list(range(r, min(r + wave, p.restarts)))
        for cand in parallel_map(run, idx, p.threads):
            u = cand.direction
            if all(abs(u @ k.direction) < dedup for k in kept) and len(kept) < d:
                kept.append(cand)
        r = idx[-1] + 1
    if len(kept) < d:
        raise CoverageFailure(f"found {len(kept)} of {d} directions in {p.restarts} restarts",
                              found=len(kept), wanted=d)
    return kept


def assemble_and_invert(candidates: Sequence, max_condition: float = 1e6) -> np.ndarray:
    """Rows of V^{-1} normalized, where V has the candidate vectors as columns."""
    V = np.column_stack([c.z if isinstance(c, CandidateDirection) else np.asarray(c, float) for c in candidates])
    if V.shape[0] != V.shape[1]:
        raise InvalidArgument("assemble_and_invert requires d = n")
    cond = float(np.linalg.cond(V))
    if not cond <= max_condition:
        raise InversionFailure(f"candidate matrix condition number {cond:.3g} exceeds {max_condition:g}",
                               condition=cond)
    M = np.linalg.inv(V)
    return M / np.linalg.norm(M, axis=1, keepdims=True)


@dataclass(frozen=True)
class Alignment:
    angles_deg: np.ndarray
    matching: np.ndarray   # matching[i] = row of W_star paired with row i of W_hat
    abs_cos: np.ndarray

    @property
    def max_angle(self) -> float:
        return float(np.max(self.angles_deg))

    @property
    def mean_angle(self) -> float:
        return float(np.mean(self.angles_deg))


def align_and_score(W_hat, W_star) -> Alignment:
    """Best row matching up to sign and permutation, by maximal total |cos|."""
    A = np.asarray(W_hat, dtype=float)
    B = np.asarray(W_star, dtype=float)
    if A.shape != B.shape:
        raise InvalidArgument("shapes differ")
    A = A / np.linalg.norm(A, axis=1, keepdims=True)
    B = B / np.linalg.norm(B, axis=1, keepdims=True)
    C = np.abs(A @ B.T)
    rows, cols = linear_sum_assignment(C, maximize=True)
    cos = np.clip(C[rows, cols], 0.0, 1.0)
    return Alignment(np.degrees(np.arccos(cos)), cols, cos)


# --------------------------------------------------------------------------
# simultaneous objective

def objective_simultaneous(W, data: DataLike, p: LandscapeParams):
    """(G(W), grad G(W)) for the pairwise objective over all rows of W.

    G(W) = E[f sum_{j != k} psi(w_j, w_k, x)] - gamma E[f sum_j H_4(w_j.x)]
           + lam sum_i (E[f H_2(w_i.x)] - u2)^2,
    psi(v, w, x) = H_2(v.x) H_2(w.x) + 2 (v.w)^2 + 4 (v.x)(w.x)(v.w).
    """
    cd = _prep(data)
    W = np.asarray(W, dtype=float)
    X, y, N, ybar = cd.X, cd.y, cd.N, cd.ybar
    A = X @ W.T                     # (m, d)
    G = W @ W.T
    s = np.diag(G).copy()
    H = (A * A - s) / SQRT2
    S = H.sum(axis=1)

    # pairwise H_2 products
    t1 = S * S - (H * H).sum(axis=1)
    # 4 (v.x)(w.x)(v.w) summed over ordered pairs
    AG = A @ G
    t3 = (AG * A).sum(axis=1) - (A * A) @ s
    # 2 (v.w)^2 over ordered pairs, a constant times E[f]
    off = float((G * G).sum() - s @ s)
    val_pair = (float(y @ (t1 + 4.0 * t3)) / N) + 2.0 * off * ybar

    A2 = A * A
    H4 = (A2 * A2 - 6.0 * A2 * s + 3.0 * s * s) / SQRT24
    val_h4 = float(y @ H4.sum(axis=1)) / N

    E2 = (y @ A2) / N - s * ybar
    E2 = E2 / SQRT2
    dev = E2 - p.u2
    lam = p.lam_value
    val = val_pair - p.gamma * val_h4 + lam * float(dev @ dev)

    yc = y[:, None]
    # d/dw_j of the H_2 product term
    C = yc * (S[:, None] - H) * A
    r = (yc * (S[:, None] - H)).sum(axis=0)
    g1 = 2.0 * SQRT2 * (C.T @ X - r[:, None] * W) / N
    # d/dw_j of the cross term
    B = AG - A * s
    M = A.T @ (yc * A)
    g3 = 2.0 * ((yc * B).T @ X + (M - np.diag(np.diag(M))) @ W) / N
    g_pair = g1 + 4.0 * g3 + 8.0 * ybar * ((G - np.diag(s)) @ W)
    # H_4 term
    w4 = yc * (4.0 * A2 * A - 12.0 * A * s)
    g_h4 = (w4.T @ X + (-12.0 * (yc * A2).sum(axis=0) + 12.0 * s * ybar * N)[:, None] * W) / (SQRT24 * N)
    # penalty
    g2 = SQRT2 * ((yc * A).T @ X / N - ybar * W)
    grad = g_pair - p.gamma * g_h4 + 2.0 * lam * dev[:, None] * g2
    if not (math.isfinite(val) and np.all(np.isfinite(grad))):
        raise NumericFailure("non-finite simultaneous objective", last_estimate=val)
    return val, grad


def minimize_simultaneous(data: DataLike, p: LandscapeParams, d: int, seed: int, *keys: int):
    """Descend the simultaneous objective from random unit rows; returns (W, value, grad norm, iters)."""
    cd = _prep(data)
    rng = make_rng(seed, *keys)
    W0 = np.stack([random_unit(rng, cd.n) for _ in range(d)])
    shape = W0.shape

    def fun(v):
        val, g = objective_simultaneous(v.reshape(shape), cd, p)
        return val, g.ravel()

    w, val, gn, it = _descend(fun, W0.ravel(), p.eps_value, p.max_iter * 5, p.max_norm * math.sqrt(d))
    return w.reshape(shape), val, gn, it


def recover_simultaneous(data: DataLike, p: LandscapeParams, d: int, seed: int) -> np.ndarray:
    """Rows of W^{-T}, normalized: the recovered directions (d = n)."""
    W, *_ = minimize_simultaneous(data, p, d, seed)
    if W.shape[0] != W.shape[1]:
        raise InvalidArgument("simultaneous recovery is implemented for d = n")
    M = np.linalg.inv(W).T
    return M / np.linalg.norm(M, axis=1, keepdims=True)


__all__ = [
    "LandscapeParams", "CandidateDirection", "DiagonalScaling", "CorrelationData", "correlate_H",
    "objective_G", "verify_local_min", "minimize_one", "recover_all_one_by_one", "assemble_and_invert",
    "align_and_score", "objective_simultaneous", "minimize_simultaneous", "recover_simultaneous",
    "canonical_sign", "fd_hessian",
]
