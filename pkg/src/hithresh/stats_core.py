"""Gaussian analytics, seeded sampling and Monte Carlo means with standard errors.

Every expectation estimated anywhere in the package ends up as an
:class:`McEstimate`, so acceptance thresholds can be stated in stderr
multiples.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np
from scipy import special

from .errors import DataError, DomainError, InvalidArgument

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

_T = TypeVar("_T")
_R = TypeVar("_R")


def _checked(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} must be finite, got {x!r}")
    return arr


def _out(arr):
    return float(arr) if arr.ndim == 0 else arr


def normal_pdf(x):
    """Standard normal density. Accepts scalars or arrays."""
    arr = _checked(x)
    return _out(INV_SQRT_2PI * np.exp(-0.5 * arr * arr))


def _tails(arr):
    # the smaller tail is computed with erfc, the other side as its complement,
    # so cdf + ccdf == 1 holds exactly in floating point
    small = 0.5 * special.erfc(np.abs(arr) / SQRT2)
    big = 1.0 - small
    cdf = np.where(arr < 0, small, big)
    ccdf = np.where(arr < 0, big, small)
    return cdf, ccdf


def normal_cdf(x):
    cdf, _ = _tails(_checked(x))
    return _out(cdf)


def normal_ccdf(x):
    """Upper tail 1 - cdf, accurate far into the right tail."""
    _, ccdf = _tails(_checked(x))
    return _out(ccdf)


def _initial_quantile(tail):
    # Abramowitz & Stegun 26.2.23, |error| < 4.5e-4; only a Newton starting point
    t = np.sqrt(-2.0 * np.log(tail))
    num = 2.515517 + 0.802853 * t + 0.010328 * t * t
    den = 1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t ** 3
    return -(t - num / den)


def normal_quantile(p):
    """Inverse of :func:`normal_cdf` on (0, 1).

    Safeguarded Newton iteration on the lower tail; the bracket shrinks on
    every step so the iteration cannot leave it.
    """
    parr = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(parr)) or np.any(parr <= 0.0) or np.any(parr >= 1.0):
        raise DomainError(f"quantile requires 0 < p < 1, got {p!r}")
    upper = parr > 0.5
    tail = np.where(upper, 1.0 - parr, parr)
    x = _initial_quantile(tail)
    lo = np.full_like(x, -40.0)
    hi = np.zeros_like(x)
    for _ in range(60):
        c = 0.5 * special.erfc(-x / SQRT2)
        diff = c - tail
        lo = np.where(diff < 0, x, lo)
        hi = np.where(diff >= 0, x, hi)
        dens = INV_SQRT_2PI * np.exp(-0.5 * x * x)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = diff / dens
        nxt = x - step
        bad = ~np.isfinite(nxt) | (nxt <= lo) | (nxt >= hi)
        nxt = np.where(bad, 0.5 * (lo + hi), nxt)
        if np.all(np.abs(nxt - x) <= 1e-15 * np.maximum(1.0, np.abs(x))):
            x = nxt
            break
        x = nxt
    x = np.where(upper, -x, x)
    x = np.where(parr == 0.5, 0.0, x)
    return _out(x)


# --------------------------------------------------------------------------
# seeding

def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Generator for ``seed`` and an optional path of integer sub-keys.

    Sub-keys address independent streams (shards, restarts, candidates) so the
    stream a worker sees never depends on scheduling.
    """
    if seed < 0 or seed >= 2 ** 64:
        raise InvalidArgument(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def sub_seed(seed: int, *keys: int) -> int:
    """Derive a 64-bit child seed; stable across runs and platforms."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def parallel_map(fn: Callable[[_T], _R], items: Sequence[_T], threads: int = 1) -> list[_R]:
    """Order-preserving map; results do not depend on the worker count."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# Monte Carlo

@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    count: int

    def zscore(self, target: float) -> float:
        if self.stderr == 0.0:
            return 0.0 if self.mean == target else math.inf
        return abs(self.mean - target) / self.stderr

    def agrees_with(self, target: float, k: float = 3.0, slack: float = 0.0) -> bool:
        return abs(self.mean - target) <= k * self.stderr + slack

    def scaled(self, factor: float) -> "McEstimate":
        return McEstimate(self.mean * factor, self.stderr * abs(factor), self.count)

    def __sub__(self, other: "McEstimate") -> "McEstimate":
        # independent estimates only
        return McEstimate(
            self.mean - other.mean,
            math.hypot(self.stderr, other.stderr),
            min(self.count, other.count),
        )

    def __add__(self, other: "McEstimate") -> "McEstimate":
        return McEstimate(
            self.mean + other.mean,
            math.hypot(self.stderr, other.stderr),
            min(self.count, other.count),
        )


def mc_mean(values: Iterable[float], count: int | None = None) -> McEstimate:
    """Sample mean and standard error of a value stream.

    ``count`` truncates the stream; ``None`` consumes it fully.
    """
    if count is not None and count < 1:
        raise InvalidArgument("count must be >= 1")
    if isinstance(values, np.ndarray):
        arr = values.ravel()
        if count is not None:
            arr = arr[:count]
    else:
        it = iter(values)
        if count is not None:
            it = itertools.islice(it, count)
        arr = np.fromiter(it, dtype=float)
    arr = np.asarray(arr, dtype=float)
    if arr.size == 0:
        raise InvalidArgument("mc_mean of an empty stream")
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise DataError(f"non-finite value {arr[bad[0]]!r} at index {bad[0]}", index=int(bad[0]))
    n = arr.size
    mean = float(arr.mean())
    if n == 1:
        return McEstimate(mean, 0.0, 1)
    sd = float(arr.std(ddof=1))
    return McEstimate(mean, sd / math.sqrt(n), n)


def binomial_estimate(successes: int, count: int) -> McEstimate:
    """Proportion with the (unbiased sample-variance) binomial standard error."""
    if count < 1:
        raise InvalidArgument("count must be >= 1")
    p = successes / count
    if count == 1:
        return McEstimate(p, 0.0, 1)
    var = p * (1.0 - p) * count / (count - 1)
    return McEstimate(p, math.sqrt(var / count), count)
