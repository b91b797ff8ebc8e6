"""Slab-based angle estimation and refinement of a coarse weight direction.

For a unit z and a slab l(z, t', eps) = {x : z.x in [t' - eps, t']}, the
probability that a monotone high-threshold network fires is, to leading
order, Phi^c((t - t' cos a) / sin a) where a is the angle between z and the
nearest planted direction. The 0.4 and 0.6 crossings in t' are therefore
tan(a) (Phi^{-1}(0.6) - Phi^{-1}(0.4)) apart, which is what
:func:`estimate_tan_alpha` measures.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .activations import ActivationSpec
from .errors import InvalidArgument, SearchFailure
from .landscape import LandscapeParams, align_and_score, recover_all_one_by_one
from .network import PlantedNetwork
from .polynomial import SparsePolynomial
from .sampling import Dataset, SampleOracle, sample_batch
from .stats_core import McEstimate, binomial_estimate, make_rng, normal_quantile, parallel_map, sub_seed

log = logging.getLogger(__name__)

QUANTILE_GAP = normal_quantile(0.6) - normal_quantile(0.4)


@dataclass(frozen=True)
class SlabQuery:
    z: np.ndarray
    t_prime: float
    eps: float
    budget: int

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if abs(np.linalg.norm(z) - 1.0) > 1e-10:
            raise InvalidArgument("slab direction must be a unit vector")
        if self.budget < 1:
            raise InvalidArgument("slab query budget must be positive")
        if not 0 < self.eps < 1.0 / max(self.t_prime, 1.0):
            raise InvalidArgument(f"slab width {self.eps} too large for t'={self.t_prime}")
        object.__setattr__(self, "z", z)


@dataclass(frozen=True)
class TanEstimate:
    s: float
    t1: float
    t2: float
    p1: McEstimate
    p2: McEstimate
    queries: int
    noisy: bool = False

    @property
    def alpha(self) -> float:
        return math.atan(self.s)


@dataclass(frozen=True)
class RefineConfig:
    eps1: float = 0.005
    eps2: float = math.radians(0.4)
    max_iter: int = 400
    budget: int = 100_000
    perturb: float = 1.0
    c_acc: float = 0.004
    tol: float = 0.01
    max_steps: int = 40
    t_max: float | None = None
    reestimate: bool = True
    threads: int = 1

    def __post_init__(self):
        if not 0 < self.eps2 < math.pi / 4:
            raise InvalidArgument("target angle must lie in (0, pi/4)")
        if self.budget < 1 or self.max_iter < 1:
            raise InvalidArgument("budgets must be positive")


class QueryKeys:
    """Hands out distinct sub-stream keys so every slab query uses fresh samples."""

    def __init__(self, *prefix: int):
        self.prefix = prefix
        self.count = 0

    def next(self) -> tuple:
        self.count += 1
        return self.prefix + (self.count,)


# --------------------------------------------------------------------------

def label_offset(oracle: SampleOracle, count: int = 100_000) -> float:
    """Median label under plain sampling; zero when the network has no constant term."""
    if oracle.net.poly.c0 == 0.0:
        return 0.0
    ds = sample_batch(oracle.with_mode("plain"), count, stream=2 ** 32 - 1)
    return float(np.median(ds.y))


def slab_sign_prob(oracle: SampleOracle, q: SlabQuery, key: tuple = (0,), offset: float = 0.0) -> McEstimate:
    """Fraction of slab-conditional samples whose label exceeds ``offset``."""
    if q.budget < 1:
        raise InvalidArgument("budget must be positive")
    slab = oracle.with_mode("slab", z=q.z, t_prime=q.t_prime, eps=q.eps)
    seed = sub_seed(oracle.seed, *key)
    slab = SampleOracle(slab.net, seed, "slab", z=q.z, t_prime=q.t_prime, eps=q.eps, noise_std=oracle.noise_std)
    y = slab.labels(q.budget)
    return binomial_estimate(int(np.count_nonzero(y > offset)), q.budget)


def _search_level(prob, level, lo, hi, p_lo, p_hi, tol, max_steps):
    """Bisection for prob(t') = level inside a bracketing interval.

    Returns (t', estimate at the last evaluated point, steps). The final point is
    moved by a secant step through the bracket so the crossing is located more
    finely than the probability tolerance alone allows.
    """
    steps = 0
    mid, pm = lo, p_lo
    while steps < max_steps:
        mid = 0.5 * (lo + hi)
        pm = prob(mid)
        steps += 1
        if abs(pm.mean - level) <= tol:
            break
        if pm.mean < level:
            lo, p_lo = mid, pm
        else:
            hi, p_hi = mid, pm
    slope = (p_hi.mean - p_lo.mean) / (hi - lo) if hi > lo else 0.0
    t = mid - (pm.mean - level) / slope if slope > 0 else mid
    return float(np.clip(t, lo, hi)), pm, steps


def estimate_tan_alpha(oracle: SampleOracle, z, eps: float, budget: int, *, key: tuple = (0,),
                       offset: float = 0.0, t_max: float | None = None, tol: float = 0.01,
                       max_steps: int = 40, hint: TanEstimate | None = None, threads: int = 1) -> TanEstimate:
    """s = (t2 - t1) / (Phi^{-1}(0.6) - Phi^{-1}(0.4)) from slab probability crossings."""
    z = np.asarray(z, dtype=float)
    z = z / np.linalg.norm(z)
    t_max = t_max if t_max is not None else 3.0 * oracle.net.t
    keys = QueryKeys(*key)
    evaluated: list[tuple[float, McEstimate]] = []

    def prob(tp: float) -> McEstimate:
        tp = max(tp, 0.0)
        est = slab_sign_prob(oracle, SlabQuery(z, tp, eps, budget), keys.next(), offset)
        evaluated.append((tp, est))
        return est

    def prob_many(ts):
        ks = [keys.next() for _ in ts]
        out = parallel_map(lambda a: slab_sign_prob(oracle, SlabQuery(z, max(a[0], 0.0), eps, budget), a[1], offset),
                           list(zip(ts, ks)), threads)
        evaluated.extend(zip(ts, out))
        return out

    lo1 = hi1 = lo2 = hi2 = None
    if hint is not None:
        w = max(2.0 * (hint.t2 - hint.t1), 0.02)
        a, b, c, e = prob_many([max(hint.t1 - w, 0.0), hint.t1 + w, max(hint.t2 - w, 0.0), hint.t2 + w])
        if a.mean < 0.4 < b.mean:
            lo1, hi1 = (max(hint.t1 - w, 0.0), a), (hint.t1 + w, b)
        if c.mean < 0.6 < e.mean:
            lo2, hi2 = (max(hint.t2 - w, 0.0), c), (hint.t2 + w, e)
    if lo1 is None or lo2 is None:
        p0, pmax = prob_many([0.0, t_max])
        if p0.mean >= 0.4:
            raise SearchFailure(f"slab probability at t'=0 is {p0.mean:.3f}, not below 0.4")
        if pmax.mean <= 0.6:
            raise SearchFailure(f"slab probability at t'={t_max:.3g} is {pmax.mean:.3f}, not above 0.6")
        if lo1 is None:
            lo1, hi1 = (0.0, p0), (t_max, pmax)
        if lo2 is None:
            lo2, hi2 = (0.0, p0), (t_max, pmax)
    t1, p1, n1 = _search_level(prob, 0.4, lo1[0], hi1[0], lo1[1], hi1[1], tol, max_steps)
    lo2b = (t1, p1) if p1.mean < 0.6 and t1 > lo2[0] else lo2
    t2, p2, n2 = _search_level(prob, 0.6, lo2b[0], hi2[0], lo2b[1], hi2[1], tol, max_steps)
    if t2 < t1:
        t1, t2 = t2, t1
    ordered = sorted(evaluated, key=lambda e: e[0])
    noisy = any(b.mean < a.mean - 2.0 * math.hypot(a.stderr, b.stderr)
                for (_, a), (_, b) in zip(ordered[:-1], ordered[1:]))
    if noisy:
        log.warning("slab probabilities not monotone in t' beyond 2 stderr")
    return TanEstimate((t2 - t1) / QUANTILE_GAP, t1, t2, p1, p2, keys.count, noisy)


# --------------------------------------------------------------------------

@dataclass
class RefineResult:
    z: np.ndarray
    alpha: float                      # estimated angle (radians) at z
    proposals: int
    accepted: int
    reached: bool
    true_angles: list = field(default_factory=list)   # degrees, when planted truth was supplied
    brackets: list = field(default_factory=list)      # (t1, t2, t / cos(true angle))

    @property
    def alpha_deg(self) -> float:
        return math.degrees(self.alpha)


def _angle(z, w) -> float:
    c = abs(float(z @ w)) / (np.linalg.norm(z) * np.linalg.norm(w))
    return math.acos(min(1.0, c))


def refine_estimate(oracle: SampleOracle, z0, cfg: RefineConfig, seed: int, *, key: int = 0,
                    offset: float | None = None, truth: np.ndarray | None = None) -> RefineResult:
    """Random tangential perturbations accepted on a multiplicative decrease of the estimated angle.

    ``truth`` (planted mode) records the true angle after every proposal and
    the bracket t1 <= t2 <= t / cos(alpha) for every successful estimate.
    """
    z = np.asarray(z0, dtype=float)
    z = z / np.linalg.norm(z)
    n = z.size
    rng = make_rng(seed, key, 0)
    offset = label_offset(oracle) if offset is None else offset
    counter = [0]
    t = oracle.net.t

    def estimate(v, hint=None):
        counter[0] += 1
        est = estimate_tan_alpha(oracle, v, cfg.eps1, cfg.budget, key=(seed % 2 ** 32, key, counter[0]),
                                 offset=offset, t_max=cfg.t_max, tol=cfg.tol, max_steps=cfg.max_steps,
                                 hint=hint, threads=cfg.threads)
        if truth is not None:
            res.brackets.append((est.t1, est.t2, t / math.cos(_angle(v, truth))))
        return est

    res = RefineResult(z, 0.0, 0, 0, False)
    cur = estimate(z)
    alpha = cur.alpha
    if truth is not None:
        res.true_angles.append(math.degrees(_angle(z, truth)))
    for _ in range(cfg.max_iter):
        if alpha <= cfg.eps2:
            break
        delta = rng.standard_normal(n)
        delta -= (delta @ z) * z
        prop = z + cfg.perturb * math.sin(alpha / n) * delta
        prop /= np.linalg.norm(prop)
        res.proposals += 1
        try:
            new = estimate(prop, hint=cur)
        except SearchFailure:
            continue
        if new.alpha <= (1.0 - cfg.c_acc / n) * alpha:
            z, cur, alpha = prop, new, new.alpha
            res.accepted += 1
            if cfg.reestimate and alpha > cfg.eps2:
                # fresh estimate of the accepted point, so a lucky draw does not
                # become the bar every later proposal has to beat
                cur = estimate(z, hint=new)
                alpha = cur.alpha
        if truth is not None:
            res.true_angles.append(math.degrees(_angle(z, truth)))
    res.z = z
    res.alpha = alpha
    res.reached = alpha <= cfg.eps2
    return res


# --------------------------------------------------------------------------
# intersections of halfspaces

@dataclass(frozen=True)
class HalfspaceIntersection:
    """g(x) = 1 iff x.w_i + t >= 0 for every row w_i of W."""

    W: np.ndarray
    t: float

    def labels(self, X) -> np.ndarray:
        return np.all(np.asarray(X) @ self.W.T + self.t >= 0, axis=1).astype(float)

    def complement_network(self, seed: int | None = None) -> PlantedNetwork:
        """1 - g as a high-threshold OR network on the negated directions."""
        d = self.W.shape[0]
        return PlantedNetwork(-self.W, ActivationSpec("sign-threshold", self.t),
                              SparsePolynomial.or_polynomial(d), seed)


def complement_labels(y) -> np.ndarray:
    return 1.0 - np.asarray(y, dtype=float)


@dataclass
class HalfspaceResult:
    W: np.ndarray
    coarse: np.ndarray
    refinements: list


def learn_halfspace_intersection(data: Dataset | callable, d: int, t: float, oracle: SampleOracle,
                                 seed: int, landscape: LandscapeParams | None = None,
                                 cfg: RefineConfig | None = None, refine: bool = True) -> HalfspaceResult:
    """Recover the d normals of an intersection of halfspaces up to sign.

    ``data`` carries the intersection's 0/1 labels (or is a callable drawing
    fresh such datasets per restart). Labels are complemented, which turns the
    problem into an OR of high-threshold units on -w_i; the landscape
    recovery gives coarse directions and each is then refined with slab
    queries against ``oracle``, which samples the complemented network.
    """
    cfg = cfg or RefineConfig()
    p = landscape or LandscapeParams.from_activation(ActivationSpec("sign-threshold", t), restarts=5 * d)

    def complemented(ds: Dataset) -> Dataset:
        return Dataset(ds.X, complement_labels(ds.y), ds.seed)

    source = (lambda r: complemented(data(r))) if callable(data) else complemented(data)
    cands = recover_all_one_by_one(source, p, d, seed)
    V = np.column_stack([c.z for c in cands])
    M = np.linalg.pinv(V)
    coarse = M / np.linalg.norm(M, axis=1, keepdims=True)
    if not refine:
        return HalfspaceResult(coarse.copy(), coarse, [])
    offset = label_offset(oracle)
    out, reps = [], []
    for i, w in enumerate(coarse):
        # orient towards the side where the complemented network fires
        probs = [slab_sign_prob(oracle, SlabQuery(s * w, t + 0.5, cfg.eps1, 20_000), (seed % 2 ** 32, 99, i, k),
                                offset).mean for k, s in enumerate((1.0, -1.0))]
        w = w if probs[0] >= probs[1] else -w
        truth = None
        if oracle.net is not None:
            W_true = oracle.net.W
            truth = W_true[int(np.argmax(np.abs(W_true @ w)))]
        r = refine_estimate(oracle, w, cfg, seed, key=1000 + i, offset=offset, truth=truth)
        out.append(r.z)
        reps.append(r)
    return HalfspaceResult(np.array(out), coarse, reps)


def score_directions(W_hat, W_star):
    return align_and_score(W_hat, W_star)
