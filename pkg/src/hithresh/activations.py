"""Thresholded activation functions u_t(a) = u(a - t) and their Gaussian tail bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, InvalidArgument

KINDS = (
    "sign-threshold",
    "relu-threshold",
    "sigmoid-threshold",
    "exp-rate",
    "exp-plain",
    "custom-even",
)

_EVEN_GRID = np.linspace(-8.0, 8.0, 161)


@dataclass(frozen=True)
class ActivationSpec:
    """Activation kind, threshold ``t`` and auxiliary parameters.

    ``rate`` is only read by ``exp-rate``; ``cap`` only by ``custom-even``,
    whose default shape is ``min(a**2, cap)``. A custom even function can be
    passed as ``fn`` instead (it is not serialized).
    """

    kind: str
    t: float = 0.0
    rate: float = 1.0
    cap: float = 25.0
    fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown activation kind {self.kind!r}; expected one of {KINDS}")
        if not math.isfinite(self.t) or self.t < 0:
            raise InvalidArgument(f"threshold must be a finite real >= 0, got {self.t}")
        if self.kind == "exp-rate" and not self.rate > 0:
            raise InvalidArgument("exp-rate activation needs a positive rate")
        if self.kind == "custom-even":
            if self.fn is None and not self.cap > 0:
                raise InvalidArgument("custom-even cap must be positive")
            base = self._base(_EVEN_GRID)
            if not np.allclose(base, self._base(-_EVEN_GRID), rtol=1e-12, atol=1e-12):
                raise InvalidArgument("custom-even activation is not even on the test grid")

    def _base(self, a):
        if self.fn is not None:
            return np.asarray(self.fn(a), dtype=float)
        return np.minimum(a * a, self.cap)

    def __call__(self, a):
        a = np.asarray(a, dtype=float)
        s = a - self.t
        kind = self.kind
        if kind == "sign-threshold":
            return (s > 0).astype(float)
        if kind == "relu-threshold":
            return np.maximum(s, 0.0)
        if kind == "sigmoid-threshold":
            return 0.5 * (1.0 + np.tanh(0.5 * s))
        if kind == "exp-rate":
            return np.exp(self.rate * s)
        if kind == "exp-plain":
            return np.exp(s)
        return self._base(s)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        """Points where u_t is discontinuous or has a kink."""
        if self.kind in ("sign-threshold", "relu-threshold"):
            return (self.t,)
        if self.kind == "custom-even" and self.fn is None:
            r = math.sqrt(self.cap)
            return (self.t - r, self.t + r)
        return ()

    @property
    def upper_bound(self) -> Optional[float]:
        """sup of u_t over the real line, or None when unbounded."""
        if self.kind in ("sign-threshold", "sigmoid-threshold"):
            return 1.0
        if self.kind == "custom-even" and self.fn is None:
            return self.cap
        return None

    @property
    def is_even(self) -> bool:
        return self.kind == "custom-even" and self.t == 0.0

    def with_threshold(self, t: float) -> "ActivationSpec":
        return ActivationSpec(self.kind, t, self.rate, self.cap, self.fn)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "t": self.t, "rho": self.rate, "cap": self.cap}


def tail_rho(u: ActivationSpec, t: float, sigma: float) -> float:
    """Analytic bound on E[u_t(g)] for g ~ N(0, sigma^2).

    sign / ReLU: sigma * exp(-t^2 / (2 sigma^2)) / sqrt(2 pi);
    sigmoid: exp(-t + sigma^2 / 2).
    """
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    if u.kind in ("sign-threshold", "relu-threshold"):
        return sigma * math.exp(-t * t / (2.0 * sigma * sigma)) / math.sqrt(2.0 * math.pi)
    if u.kind == "sigmoid-threshold":
        return math.exp(-t + 0.5 * sigma * sigma)
    raise DomainError(f"no analytic tail bound for activation kind {u.kind!r}")


def choose_threshold(kind: str, d: int, eta: float, C: float = 2.0) -> float:
    """Threshold making the activation tail roughly d^-eta.

    sign / ReLU use C sqrt(eta ln d); sigmoid uses C eta ln d.
    """
    if d < 2:
        raise InvalidArgument("choose_threshold needs d >= 2")
    if eta < 0:
        raise InvalidArgument("eta must be nonnegative")
    if kind == "sigmoid-threshold":
        return C * eta * math.log(d)
    return C * math.sqrt(eta * math.log(d))
