"""Normalized probabilists' Hermite polynomials and activation Hermite coefficients.

Convention throughout: h_k = He_k / sqrt(k!), so E[h_i(g) h_j(g)] = delta_ij for
g ~ N(0, 1), and the weighted form H_k^sigma(a) = sigma^k h_k(a / sigma).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .activations import ActivationSpec
from .errors import DomainError, NumericFailure
from .stats_core import INV_SQRT_2PI

K_MAX = 16
QUAD_TOL = 1e-10
_INTEGRATION_HALF_WIDTH = 40.0
_MAX_NODES = 4096


def _check_k(k) -> int:
    if isinstance(k, bool) or int(k) != k or not 0 <= int(k) <= K_MAX:
        raise DomainError(f"Hermite index must be an integer in [0, {K_MAX}], got {k!r}")
    return int(k)


def h_all(kmax: int, x) -> np.ndarray:
    """Stack of h_0..h_kmax at x; shape (kmax + 1,) + x.shape."""
    kmax = _check_k(kmax)
    x = np.asarray(x, dtype=float)
    out = np.empty((kmax + 1,) + x.shape)
    out[0] = 1.0
    if kmax >= 1:
        out[1] = x
    # normalized recurrence: h_{k+1} = (x h_k - sqrt(k) h_{k-1}) / sqrt(k+1)
    for k in range(1, kmax):
        out[k + 1] = (x * out[k] - math.sqrt(k) * out[k - 1]) / math.sqrt(k + 1)
    return out


def h_eval(k: int, x):
    """Normalized Hermite polynomial h_k evaluated at x (scalar or array)."""
    k = _check_k(k)
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("h_eval needs finite x")
    val = h_all(k, arr)[k]
    return float(val) if val.ndim == 0 else val


def weighted_h_eval(l: int, sigma, a):
    """sigma^l h_l(a / sigma); sigma may be an array broadcastable against a."""
    l = _check_k(l)
    sig = np.asarray(sigma, dtype=float)
    if np.any(~(sig > 0)):
        raise DomainError("weighted Hermite polynomial needs sigma > 0")
    a = np.asarray(a, dtype=float)
    val = sig ** l * h_all(l, a / sig)[l]
    return float(val) if val.ndim == 0 else val


def H2(z, X) -> np.ndarray:
    """Rows of X mapped through H_2^{||z||}(z.x) = ((z.x)^2 - ||z||^2)/sqrt(2)."""
    a = X @ z
    return (a * a - z @ z) / math.sqrt(2.0)


def H4(z, X) -> np.ndarray:
    """H_4^{||z||}(z.x) = ((z.x)^4 - 6 (z.x)^2 ||z||^2 + 3 ||z||^4) / sqrt(24)."""
    a = X @ z
    s2 = z @ z
    a2 = a * a
    return (a2 * a2 - 6.0 * a2 * s2 + 3.0 * s2 * s2) / math.sqrt(24.0)


# --------------------------------------------------------------------------
# activation coefficients

@lru_cache(maxsize=None)
def _legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


@lru_cache(maxsize=None)
def _hermite_e(n: int):
    x, w = np.polynomial.hermite_e.hermegauss(n)
    return x, w / math.sqrt(2.0 * math.pi)


def _pieces(u: ActivationSpec):
    L = _INTEGRATION_HALF_WIDTH
    pts = {-L, L, -8.0, 8.0, 0.0}
    pts.update(b for b in u.breakpoints if -L < b < L)
    return sorted(pts)


def _quad_all(u: ActivationSpec, kmax: int, nodes: int) -> np.ndarray:
    """E[u(g) h_k(g)] for k = 0..kmax with a given node count."""
    if u.breakpoints:
        # piecewise Gauss-Legendre against the Gaussian density, split at kinks
        pts = _pieces(u)
        xs, ws = _legendre(nodes)
        total = np.zeros(kmax + 1)
        for a, b in zip(pts[:-1], pts[1:]):
            g = 0.5 * (b - a) * xs + 0.5 * (a + b)
            w = 0.5 * (b - a) * ws * INV_SQRT_2PI * np.exp(-0.5 * g * g)
            total += h_all(kmax, g) @ (w * u(g))
        return total
    g, w = _hermite_e(nodes)
    with np.errstate(over="ignore"):
        vals = u(g)
    return h_all(kmax, g) @ (w * vals)


@dataclass(frozen=True)
class HermiteCoeffTable:
    """û_0..û_kmax for one activation, with the node-doubling error estimate."""

    activation: ActivationSpec
    coeffs: tuple
    error: float
    nodes: int

    @property
    def t(self) -> float:
        return self.activation.t

    def __getitem__(self, k: int) -> float:
        return self.coeffs[k]

    @property
    def beta(self) -> float:
        """Alias for û_2."""
        return self.coeffs[2]


def coeff_table(u: ActivationSpec, kmax: int = 8, tol: float = QUAD_TOL) -> HermiteCoeffTable:
    """Hermite coefficients of u up to kmax with node doubling until agreement within tol."""
    kmax = _check_k(kmax)
    n = 32
    prev = _quad_all(u, kmax, n)
    while True:
        n2 = 2 * n
        cur = _quad_all(u, kmax, n2)
        if not np.all(np.isfinite(cur)):
            raise NumericFailure("non-finite quadrature value", last_estimate=prev)
        err = float(np.max(np.abs(cur - prev)))
        if err <= tol:
            return HermiteCoeffTable(u, tuple(float(c) for c in cur), err, n2)
        if n2 >= _MAX_NODES:
            raise NumericFailure(
                f"Hermite coefficient quadrature did not converge (error {err:.3g})",
                last_estimate=cur,
            )
        prev, n = cur, n2


def activation_coeff(u: ActivationSpec, k: int) -> float:
    """û_k = E[u(g) h_k(g)] for g ~ N(0, 1)."""
    k = _check_k(k)
    return coeff_table(u, k)[k]


def cross_coeff(n: int, m: int, gamma: float) -> float:
    """E[h_m(x) h_n(gamma x)] for x ~ N(0, 1) under the normalized convention.

    Nonzero only when k = (n - m)/2 is a nonnegative integer, in which case it
    equals gamma^m (gamma^2 - 1)^k sqrt(n!/m!) / (2^k k!).
    """
    n, m = _check_k(n), _check_k(m)
    if (n - m) % 2 or n < m:
        return 0.0
    k = (n - m) // 2
    return (gamma ** m * (gamma * gamma - 1.0) ** k
            * math.sqrt(math.factorial(n) / math.factorial(m))
            / (2 ** k * math.factorial(k)))


def cross_coeff_he(n: int, m: int, gamma: float) -> float:
    """Coefficient of He_m(x) in the expansion of He_n(gamma x) (unnormalized form)."""
    n, m = _check_k(n), _check_k(m)
    if (n - m) % 2 or n < m:
        return 0.0
    k = (n - m) // 2
    return (gamma ** (n - 2 * k) * (gamma * gamma - 1.0) ** k * math.comb(n, 2 * k)
            * math.factorial(2 * k) / (math.factorial(k) * 2 ** k))
