"""Seeded sample oracles (plain, biased, slab, hyperplane) and binary dataset files."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special

from .errors import InvalidArgument, ProgressFailure, UnsupportedMode
from .network import PlantedNetwork
from .stats_core import make_rng

MODES = ("plain", "biased", "slab", "hyperplane")
_MAGIC = b"HTDSET01"
_HEADER = struct.Struct("<QQQ")


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    seed: int = 0

    def __post_init__(self):
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise InvalidArgument("dataset shapes do not match")
        for a in (self.X, self.y):
            a.setflags(write=False)

    def __len__(self):
        return self.y.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    def save(self, path) -> None:
        rec = np.empty((len(self), self.n + 1), dtype="<f8")
        rec[:, :-1] = self.X
        rec[:, -1] = self.y
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(_HEADER.pack(self.n, len(self), self.seed))
            fh.write(rec.tobytes())

    @classmethod
    def load(cls, path) -> "Dataset":
        raw = Path(path).read_bytes()
        if raw[:len(_MAGIC)] != _MAGIC:
            raise InvalidArgument(f"{path} is not a dataset file")
        n, count, seed = _HEADER.unpack_from(raw, len(_MAGIC))
        body = np.frombuffer(raw, dtype="<f8", offset=len(_MAGIC) + _HEADER.size)
        if body.size != count * (n + 1):
            raise InvalidArgument("dataset body size does not match its header")
        rec = body.reshape(count, n + 1).astype(float)
        return cls(rec[:, :-1].copy(), rec[:, -1].copy(), seed)


@dataclass(frozen=True)
class SampleOracle:
    """Draws (x, f(x)) pairs from a planted network.

    ``slab`` conditions on z.x in [t_prime - eps, t_prime]; ``hyperplane`` on
    z.x = s. Both are exact: the component along z is drawn from the
    (truncated) conditional law and the orthogonal part is standard normal.
    ``biased`` accepts a plain draw with probability f(x) / f_max.
    """

    net: PlantedNetwork
    seed: int
    mode: str = "plain"
    z: np.ndarray | None = None
    t_prime: float = 0.0
    eps: float = 0.0
    s: float = 0.0
    noise_std: float = 0.0
    f_max: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidArgument(f"unknown oracle mode {self.mode!r}")
        if self.mode in ("slab", "hyperplane"):
            if self.z is None:
                raise InvalidArgument(f"{self.mode} mode needs a direction z")
            z = np.asarray(self.z, dtype=float)
            if z.shape != (self.net.n,) or not np.linalg.norm(z) > 0:
                raise InvalidArgument("z must be a nonzero n-vector")
            object.__setattr__(self, "z", z)
        if self.mode == "slab" and not self.eps > 0:
            raise InvalidArgument("slab width must be positive")
        if self.noise_std < 0:
            raise InvalidArgument("noise std must be nonnegative")
        if self.mode == "biased" and self.f_max is None:
            object.__setattr__(self, "f_max", default_f_max(self.net))

    def with_mode(self, mode: str, **kw) -> "SampleOracle":
        args = dict(net=self.net, seed=self.seed, mode=mode, noise_std=self.noise_std)
        args.update(kw)
        return SampleOracle(**args)

    # -- conditional components -------------------------------------------
    def _along(self, rng, count):
        """Coordinate a = zhat.x of each draw under the oracle's conditioning."""
        r = float(np.linalg.norm(self.z))
        if self.mode == "hyperplane":
            return np.full(count, self.s / r)
        lo, hi = (self.t_prime - self.eps) / r, self.t_prime / r
        return truncated_normal(rng, lo, hi, count)

    def _draw_x(self, rng, count):
        g = rng.standard_normal((count, self.net.n))
        if self.mode in ("plain", "biased"):
            return g
        zh = self.z / np.linalg.norm(self.z)
        a = self._along(rng, count)
        return g - np.outer(g @ zh, zh) + np.outer(a, zh)

    def _noise(self, rng, y):
        if self.noise_std > 0:
            y = y + self.noise_std * rng.standard_normal(y.shape)
        return y

    def orthogonal_preactivations(self, count: int, stream: int = 0):
        """(B, W zhat) where W x = B + a W zhat for a draw with zhat.x = a.

        B is W applied to the component of x orthogonal to z, so the same B can
        be reused to evaluate several slice positions a with common randomness.
        """
        if self.z is None:
            raise InvalidArgument("orthogonal preactivations need a direction z")
        W = self.net.W
        zh = np.asarray(self.z, dtype=float) / np.linalg.norm(self.z)
        wz = W @ zh
        cov = W @ W.T - np.outer(wz, wz)
        vals, vecs = np.linalg.eigh(cov)
        root = vecs * np.sqrt(np.clip(vals, 0.0, None))
        rng = make_rng(self.seed, stream)
        return rng.standard_normal((count, W.shape[0])) @ root.T, wz

    def preactivations(self, count: int, stream: int = 0):
        """(W x, zhat.x) for conditional draws without materializing x.

        W x = W P_perp g + a W zhat with P_perp g ~ N(0, I - zhat zhat^T), so its
        d-dimensional covariance is factored once per call.
        """
        if self.mode not in ("slab", "hyperplane"):
            raise UnsupportedMode("preactivations are only needed for conditional modes")
        rng = make_rng(self.seed, stream)
        W = self.net.W
        zh = self.z / np.linalg.norm(self.z)
        wz = W @ zh
        cov = W @ W.T - np.outer(wz, wz)
        vals, vecs = np.linalg.eigh(cov)
        root = vecs * np.sqrt(np.clip(vals, 0.0, None))
        a = self._along(rng, count)
        A = rng.standard_normal((count, W.shape[0])) @ root.T + np.outer(a, wz)
        return A, a

    def labels(self, count: int, stream: int = 0) -> np.ndarray:
        """Labels only, for conditional modes (fast path used by refinement)."""
        A, _ = self.preactivations(count, stream)
        y = self.net.poly.evaluate(self.net.activation(A))
        return self._noise(make_rng(self.seed, stream, 1), y)


def default_f_max(net: PlantedNetwork) -> float:
    sup = net.activation.upper_bound
    if sup is None:
        raise InvalidArgument("biased sampling of an unbounded activation needs an explicit f_max")
    top = max(1, net.poly.max_support)
    return abs(net.poly.c0) + sum(abs(c) for c in net.poly.terms.values()) * max(1.0, sup) ** top


def sample_batch(oracle: SampleOracle, count: int, stream: int = 0,
                 min_acceptance: float = 1e-6) -> Dataset:
    """``count`` samples from the oracle's ``stream``-th independent sub-stream."""
    if count < 1:
        raise InvalidArgument("count must be >= 1")
    net = oracle.net
    rng = make_rng(oracle.seed, stream)
    noise_rng = make_rng(oracle.seed, stream, 1)
    if oracle.mode != "biased":
        X = oracle._draw_x(rng, count)
        y = net.evaluate(X)
        return Dataset(X, oracle._noise(noise_rng, np.asarray(y, dtype=float)), oracle.seed)

    accept_rng = make_rng(oracle.seed, stream, 2)
    kept_x, kept = [], 0
    drawn = 0
    batch = max(1024, 2 * count)
    while kept < count:
        X = rng.standard_normal((batch, net.n))
        y = np.asarray(net.evaluate(X), dtype=float)
        if np.any(y < 0):
            raise UnsupportedMode("biased sampling requires f >= 0")
        acc = accept_rng.random(batch) * oracle.f_max < y
        kept_x.append(X[acc])
        kept += int(acc.sum())
        drawn += batch
        if drawn >= 1e7 and kept / drawn < min_acceptance:
            raise ProgressFailure(f"biased oracle acceptance {kept / drawn:.2e} below {min_acceptance:g}")
        if drawn >= 1e9:
            raise ProgressFailure("biased oracle made no progress after 1e9 draws")
    X = np.concatenate(kept_x)[:count]
    y = np.asarray(net.evaluate(X), dtype=float)
    return Dataset(X, oracle._noise(noise_rng, y), oracle.seed)


def truncated_normal(rng: np.random.Generator, lo: float, hi: float, count: int) -> np.ndarray:
    """Exact N(0, 1) draws conditioned on [lo, hi] by inverting the cdf.

    Works in whichever tail the interval sits, so intervals far from the
    origin keep full relative precision.
    """
    u = rng.random(count)
    if lo >= 0:
        qa, qb = special.ndtr(-hi), special.ndtr(-lo)
        return -special.ndtri(qa + u * (qb - qa))
    if hi <= 0:
        pa, pb = special.ndtr(lo), special.ndtr(hi)
        return special.ndtri(pa + u * (pb - pa))
    pa, pb = special.ndtr(lo), special.ndtr(hi)
    return np.clip(special.ndtri(pa + u * (pb - pa)), lo, hi)


def gaussian_batch(seed: int, count: int, n: int, *keys: int) -> np.ndarray:
    return make_rng(seed, *keys).standard_normal((count, n))


def slab_probability(z_norm: float, t_prime: float, eps: float) -> float:
    """P(z.x in [t' - eps, t']) for x ~ N(0, I)."""
    return float(special.ndtr(t_prime / z_norm) - special.ndtr((t_prime - eps) / z_norm))


__all__ = ["Dataset", "SampleOracle", "sample_batch", "default_f_max", "gaussian_batch", "slab_probability",
           "truncated_normal"]
