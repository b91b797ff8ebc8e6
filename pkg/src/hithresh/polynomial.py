"""Sparse polynomials P(X_1, ..., X_d) used as the top layer of a planted network.

Variables are 0-based internally; monomials are tuples of ``(index, exponent)``
pairs with strictly increasing indices.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import InvalidArgument, UnsupportedMode

Monomial = tuple  # tuple[tuple[int, int], ...]


def make_monomial(pairs: Iterable) -> Monomial:
    """Normalize an iterable of indices or (index, exponent) pairs into a Monomial."""
    acc: dict[int, int] = {}
    for p in pairs:
        if isinstance(p, (tuple, list)):
            i, e = int(p[0]), int(p[1])
        else:
            i, e = int(p), 1
        if i < 0 or e < 1:
            raise InvalidArgument(f"bad monomial factor {p!r}")
        acc[i] = acc.get(i, 0) + e
    return tuple(sorted(acc.items()))


@dataclass(frozen=True)
class SparsePolynomial:
    """c0 + sum_S c_S prod_{(j, r) in S} X_j^r.

    ``degree1`` marks multilinear polynomials (all exponents 1), which is what
    the derivative / substitution algebra requires.
    """

    c0: float = 0.0
    terms: Mapping = field(default_factory=dict)
    degree1: bool = True

    def __post_init__(self):
        clean: dict = {}
        for mono, c in dict(self.terms).items():
            m = make_monomial(mono)
            if len(m) == 0:
                raise InvalidArgument("constant term belongs in c0")
            if self.degree1 and any(e != 1 for _, e in m):
                raise InvalidArgument(f"monomial {m} has exponent > 1 in degree-1 mode")
            clean[m] = clean.get(m, 0.0) + float(c)
        clean = {m: c for m, c in clean.items() if c != 0.0}
        object.__setattr__(self, "terms", dict(sorted(clean.items())))
        object.__setattr__(self, "c0", float(self.c0))

    # -- constructors -----------------------------------------------------
    @classmethod
    def from_sets(cls, c0: float, sets: Mapping) -> "SparsePolynomial":
        """Degree-1 polynomial from {tuple of indices: coefficient}."""
        return cls(c0, {make_monomial(S): c for S, c in sets.items()}, True)

    @classmethod
    def linear(cls, coeffs, c0: float = 0.0) -> "SparsePolynomial":
        return cls(c0, {((i, 1),): c for i, c in enumerate(coeffs)}, True)

    @classmethod
    def or_polynomial(cls, k: int) -> "SparsePolynomial":
        """1 - prod_i (1 - X_i): equals 1 iff some X_i = 1, for X in {0,1}^k."""
        terms = {}
        for r in range(1, k + 1):
            for S in itertools.combinations(range(k), r):
                terms[make_monomial(S)] = (-1.0) ** (r + 1)
        return cls(0.0, terms, True)

    # -- inspection -------------------------------------------------------
    @property
    def num_vars(self) -> int:
        idx = [i for m in self.terms for i, _ in m]
        return max(idx) + 1 if idx else 0

    @property
    def max_support(self) -> int:
        return max((len(m) for m in self.terms), default=0)

    def support(self, mono: Monomial) -> tuple:
        return tuple(i for i, _ in mono)

    def linear_coeffs(self, d: int | None = None) -> np.ndarray:
        d = self.num_vars if d is None else d
        out = np.zeros(d)
        for m, c in self.terms.items():
            if len(m) == 1 and m[0][1] == 1:
                out[m[0][0]] = c
        return out

    def higher_terms(self) -> dict:
        """Monomials that are not of the form X_i."""
        return {m: c for m, c in self.terms.items() if not (len(m) == 1 and m[0][1] == 1)}

    def abs_coeff_sum(self) -> float:
        return abs(self.c0) + sum(abs(c) for c in self.terms.values())

    # -- evaluation -------------------------------------------------------
    def evaluate(self, X) -> np.ndarray:
        """P at each row of X (shape (..., d))."""
        X = np.asarray(X, dtype=float)
        out = np.full(X.shape[:-1], self.c0)
        for m, c in self.terms.items():
            prod = c
            for i, e in m:
                prod = prod * (X[..., i] if e == 1 else X[..., i] ** e)
            out = out + prod
        return out

    def linear_part(self, d: int | None = None) -> "SparsePolynomial":
        return SparsePolynomial.linear(self.linear_coeffs(d), self.c0)

    def univariate_part(self) -> "SparsePolynomial":
        """c0 + sum_i q_i(X_i): all monomials touching a single variable."""
        return SparsePolynomial(self.c0, {m: c for m, c in self.terms.items() if len(m) == 1}, self.degree1)

    # -- algebra ----------------------------------------------------------
    def _require_degree1(self, what: str):
        if not self.degree1:
            raise UnsupportedMode(f"{what} is only defined for degree-1 polynomials")

    def partial_derivative(self, i: int) -> "SparsePolynomial":
        """Q_i with P = X_i Q_i + R_i."""
        return self.split(i)[0]

    def split(self, i: int) -> tuple["SparsePolynomial", "SparsePolynomial"]:
        """(Q_i, R_i) with P = X_i Q_i + R_i and neither depending on X_i."""
        self._require_degree1("partial_derivative")
        q_c0 = 0.0
        q_terms: dict = {}
        r_terms: dict = {}
        for m, c in self.terms.items():
            idx = self.support(m)
            if i in idx:
                rest = tuple(j for j in idx if j != i)
                if rest:
                    q_terms[make_monomial(rest)] = c
                else:
                    q_c0 += c
            else:
                r_terms[m] = c
        return SparsePolynomial(q_c0, q_terms, True), SparsePolynomial(self.c0, r_terms, True)

    def substitute_shifted(self, mu: float) -> "SparsePolynomial":
        """Expansion of P(mu (X_1 + 1), ..., mu (X_d + 1))."""
        self._require_degree1("substitute_shifted")
        c0 = self.c0
        terms: dict = {}
        for m, c in self.terms.items():
            idx = self.support(m)
            scale = c * mu ** len(idx)
            for r in range(len(idx) + 1):
                for sub in itertools.combinations(idx, r):
                    if sub:
                        key = make_monomial(sub)
                        terms[key] = terms.get(key, 0.0) + scale
                    else:
                        c0 += scale
        return SparsePolynomial(c0, terms, True)

    def __add__(self, other: "SparsePolynomial") -> "SparsePolynomial":
        terms = dict(self.terms)
        for m, c in other.terms.items():
            terms[m] = terms.get(m, 0.0) + c
        return SparsePolynomial(self.c0 + other.c0, terms, self.degree1 and other.degree1)

    def scale(self, a: float) -> "SparsePolynomial":
        return SparsePolynomial(a * self.c0, {m: a * c for m, c in self.terms.items()}, self.degree1)

    # -- text form --------------------------------------------------------
    def to_lines(self) -> list[str]:
        lines = [f"c0 {self.c0!r}", f"degree1 {int(self.degree1)}"]
        for m, c in self.terms.items():
            lines.append("term " + ",".join(f"{i}:{e}" for i, e in m) + f" {c!r}")
        return lines

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "SparsePolynomial":
        c0, degree1, terms = 0.0, True, {}
        for line in lines:
            key, _, rest = line.strip().partition(" ")
            if key == "c0":
                c0 = float(rest)
            elif key == "degree1":
                degree1 = bool(int(rest))
            elif key == "term":
                spec, coef = rest.rsplit(" ", 1)
                mono = [tuple(int(v) for v in f.split(":")) for f in spec.split(",")]
                terms[make_monomial(mono)] = float(coef)
        return cls(c0, terms, degree1)

    def __str__(self):
        parts = [f"{self.c0:g}"] if self.c0 else []
        for m, c in self.terms.items():
            parts.append(f"{c:g}*" + "*".join(f"X{i + 1}" + (f"^{e}" if e > 1 else "") for i, e in m))
        return " + ".join(parts) if parts else "0"


def pairwise_polynomial(d: int, lin: float = 1.0, pair: float = 0.5, pairs=None) -> SparsePolynomial:
    """sum_i lin X_i + pair * sum over the given pairs (default all i<j) of X_i X_j."""
    sets = {(i,): lin for i in range(d)}
    for p in (pairs if pairs is not None else itertools.combinations(range(d), 2)):
        sets[tuple(p)] = pair
    return SparsePolynomial.from_sets(0.0, sets)


def product_coefficient_sum(P: SparsePolynomial, value: float, contains=()) -> float:
    """sum over monomials S containing ``contains`` of c_S * value^(|S| - |contains|)."""
    need = set(contains)
    total = 0.0
    for m, c in P.terms.items():
        idx = set(P.support(m))
        if need <= idx:
            total += c * value ** (len(idx) - len(need))
    if not need:
        total += P.c0
    return total

