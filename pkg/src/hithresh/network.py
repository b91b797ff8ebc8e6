"""Planted two-layer networks f(x) = P(u_t(w_1.x), ..., u_t(w_d.x)).

Also holds the weight generators, the assumption validators and the
f - f_lin gap diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .activations import ActivationSpec, choose_threshold, tail_rho
from .errors import DomainError, InvalidArgument
from .polynomial import SparsePolynomial
from .stats_core import McEstimate, make_rng, mc_mean

_FORMAT_HEADER = "# hithresh network v1"


@dataclass(frozen=True)
class PlantedNetwork:
    W: np.ndarray
    activation: ActivationSpec
    poly: SparsePolynomial
    seed: int | None = None
    unit_rows: bool = True
    kappa: float = field(init=False)

    def __post_init__(self):
        W = np.array(self.W, dtype=float, copy=True)
        if W.ndim != 2:
            raise InvalidArgument("W must be a d x n matrix")
        d, n = W.shape
        if d > n:
            raise InvalidArgument(f"unit count d={d} exceeds input dimension n={n}")
        norms = np.linalg.norm(W, axis=1)
        if self.unit_rows and np.any(np.abs(norms - 1.0) > 1e-12):
            raise InvalidArgument("rows of W must have unit norm")
        if not np.all(norms > 0):
            raise InvalidArgument("rows of W must be nonzero")
        if self.poly.num_vars > d:
            raise InvalidArgument("polynomial refers to more variables than units")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)
        sv = np.linalg.svd(W, compute_uv=False)
        object.__setattr__(self, "kappa", float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf)

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def n(self) -> int:
        return self.W.shape[1]

    @property
    def t(self) -> float:
        return self.activation.t

    @property
    def spectral_norm(self) -> float:
        return float(np.linalg.norm(self.W, 2))

    def _check_x(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise InvalidArgument(f"input has dimension {x.shape[-1]}, network expects {self.n}")
        return x

    def units(self, x) -> np.ndarray:
        """X_i = u_t(w_i . x), shape (..., d)."""
        x = self._check_x(x)
        return self.activation(x @ self.W.T)

    def units_from_preacts(self, A) -> np.ndarray:
        return self.activation(A)

    def evaluate(self, x):
        val = self.poly.evaluate(self.units(x))
        return float(val) if np.ndim(val) == 0 else val

    __call__ = evaluate

    def f_lin(self, x):
        val = self.poly.linear_part(self.d).evaluate(self.units(x))
        return float(val) if np.ndim(val) == 0 else val

    def f_uni(self, x):
        val = self.poly.univariate_part().evaluate(self.units(x))
        return float(val) if np.ndim(val) == 0 else val

    # -- serialization ------------------------------------------------------
    def to_text(self) -> str:
        a = self.activation
        lines = [
            _FORMAT_HEADER,
            f"n {self.n}",
            f"d {self.d}",
            f"activation kind={a.kind} t={a.t!r} rho={a.rate!r} cap={a.cap!r}",
            f"seed {self.seed if self.seed is not None else '-'}",
            f"unit_rows {int(self.unit_rows)}",
        ]
        lines += ["w " + " ".join(repr(float(v)) for v in row) for row in self.W]
        lines += self.poly.to_lines()
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PlantedNetwork":
        rows, poly_lines, fields = [], [], {}
        act = None
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, rest = line.partition(" ")
            if key in ("n", "d", "seed", "unit_rows"):
                fields[key] = rest.strip()
            elif key == "activation":
                kv = dict(item.split("=", 1) for item in rest.split())
                act = ActivationSpec(kv["kind"], float(kv["t"]), float(kv.get("rho", 1.0)),
                                     float(kv.get("cap", 25.0)))
            elif key == "w":
                rows.append([float(v) for v in rest.split()])
            elif key in ("c0", "degree1", "term"):
                poly_lines.append(line)
            else:
                raise InvalidArgument(f"unrecognized network field {key!r}")
        if act is None or not rows:
            raise InvalidArgument("network text lacks activation or weights")
        W = np.array(rows)
        if W.shape != (int(fields["d"]), int(fields["n"])):
            raise InvalidArgument("weight rows do not match the declared n, d")
        seed = None if fields.get("seed", "-") == "-" else int(fields["seed"])
        unit = bool(int(fields.get("unit_rows", "1")))
        return cls(W, act, SparsePolynomial.from_lines(poly_lines), seed, unit)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "PlantedNetwork":
        return cls.from_text(Path(path).read_text())


# --------------------------------------------------------------------------
# weight generators

def orthonormal_weights(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """d orthonormal rows in R^n from the QR factorization of a Gaussian matrix."""
    if d > n:
        raise InvalidArgument("need d <= n")
    q, r = np.linalg.qr(rng.standard_normal((n, d)))
    q = q * np.sign(np.diag(r))
    return _unit_rows(q.T)


def equiangular_weights(d: int, n: int, cos: float, rng: np.random.Generator) -> np.ndarray:
    """Unit rows with every pairwise inner product equal to ``cos``.

    The Gram matrix (1 - c) I + c 11^T has condition number
    (1 + (d - 1) c) / (1 - c), so the rows' condition number is its square root.
    """
    if not -1.0 / max(d - 1, 1) < cos < 1.0:
        raise InvalidArgument("equiangular cosine out of range")
    G = (1.0 - cos) * np.eye(d) + cos * np.ones((d, d))
    L = np.linalg.cholesky(G)
    basis = orthonormal_weights(d, n, rng)
    return _unit_rows(L @ basis)


def conditioned_weights(d: int, n: int, kappa: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-norm rows whose singular values have ratio exactly ``kappa``."""
    if kappa < 1.0:
        raise InvalidArgument("condition number must be >= 1")
    if d == 1 or kappa == 1.0:
        return orthonormal_weights(d, n, rng)
    k2 = kappa * kappa
    cos = (k2 - 1.0) / (k2 + d - 1.0)
    return equiangular_weights(d, n, cos, rng)


def _unit_rows(W):
    W = np.asarray(W, dtype=float)
    W = W / np.linalg.norm(W, axis=1, keepdims=True)
    # one more pass: the first division can leave norms 1 +- 2 ulp
    return W / np.linalg.norm(W, axis=1, keepdims=True)


def random_network(n: int, d: int, activation: ActivationSpec, poly: SparsePolynomial,
                   seed: int, kappa: float = 1.0) -> PlantedNetwork:
    rng = make_rng(seed, 0)
    W = conditioned_weights(d, n, kappa, rng) if kappa > 1.0 else orthonormal_weights(d, n, rng)
    return PlantedNetwork(W, activation, poly, seed)


# --------------------------------------------------------------------------
# diagnostics

@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool | None
    measured: float
    bound: str


@dataclass(frozen=True)
class AssumptionReport:
    checks: tuple

    @property
    def all_passed(self) -> bool:
        return all(c.passed is not False for c in self.checks)

    def __getitem__(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


DEFAULT_BOUNDS = {"c_lo": 0.1, "c_hi": 10.0, "c_max": 2.0, "kappa_max": 2.0, "slack": 1.0, "C": 2.0}


def validate_assumptions(net: PlantedNetwork, eta: float, bounds: dict | None = None) -> AssumptionReport:
    """Measured values against the structural assumptions on P, W* and t."""
    b = dict(DEFAULT_BOUNDS)
    b.update(bounds or {})
    lin = net.poly.linear_coeffs(net.d)
    lin_ok = bool(np.all((np.abs(lin) >= b["c_lo"]) & (np.abs(lin) <= b["c_hi"])))
    higher = [abs(c) for c in net.poly.higher_terms().values()]
    cmax = max(higher, default=0.0)
    checks = [
        AssumptionCheck("linear_coefficients", lin_ok, float(np.min(np.abs(lin))) if lin.size else 0.0,
                        f"[{b['c_lo']}, {b['c_hi']}]"),
        AssumptionCheck("higher_coefficients", cmax <= b["c_max"], cmax, f"<= {b['c_max']}"),
        AssumptionCheck("condition_number", net.kappa <= b["kappa_max"], net.kappa, f"<= {b['kappa_max']}"),
    ]
    try:
        rho = tail_rho(net.activation, net.t, net.spectral_norm)
        exponent = math.log(1.0 / rho) / math.log(net.d) if net.d > 1 else math.inf
        # t = C sqrt(eta ln d) puts the tail near d^(-C^2 eta / 2), so the
        # window runs from eta (tail no heavier than d^-eta) to that exponent
        hi = b["C"] ** 2 * eta / 2.0 + b["slack"]
        checks.append(AssumptionCheck("threshold", eta <= exponent <= hi, exponent,
                                      f"{eta} <= log_d(1/rho) <= {hi:g}"))
    except DomainError:
        checks.append(AssumptionCheck("threshold", None, math.nan, "no analytic tail bound"))
    return AssumptionReport(tuple(checks))


def gap_diagnostic(net: PlantedNetwork, count: int, seed: int, C: float = 10.0,
                   chunk: int = 200_000) -> tuple[McEstimate, float]:
    """Monte Carlo E|f(x) - f_lin(x)| (f_uni for higher-degree P) and C d^3 rho(t,1) rho(t,||W*||)."""
    if count < 10_000:
        raise InvalidArgument("gap_diagnostic needs count >= 1e4")
    ref = net.poly.linear_part(net.d) if net.poly.degree1 else net.poly.univariate_part()
    vals = []
    done = 0
    shard = 0
    while done < count:
        m = min(chunk, count - done)
        X = make_rng(seed, shard).standard_normal((m, net.n))
        U = net.units(X)
        vals.append(np.abs(net.poly.evaluate(U) - ref.evaluate(U)))
        done += m
        shard += 1
    est = mc_mean(np.concatenate(vals))
    try:
        bound = C * net.d ** 3 * tail_rho(net.activation, net.t, 1.0) * tail_rho(
            net.activation, net.t, net.spectral_norm)
    except DomainError:
        bound = math.nan
    return est, bound


__all__ = [
    "PlantedNetwork", "orthonormal_weights", "equiangular_weights", "conditioned_weights",
    "random_network", "validate_assumptions", "gap_diagnostic", "AssumptionReport",
    "choose_threshold", "tail_rho",
]
