"""Exact multivariate polynomials with real coefficients.

A polynomial is a finite map from exponent tuples to coefficients. Terms are
kept in graded-lexicographic order so that evaluation and serialization are
deterministic.
"""

from __future__ import annotations

import json
import math
from itertools import product
from typing import Mapping, Sequence

import numpy as np

MultiIndex = tuple[int, ...]


def grlex_key(alpha: MultiIndex) -> tuple:
    return (sum(alpha), alpha)


def multi_indices(n: int, order: int) -> list[MultiIndex]:
    """All multi-indices of length ``n`` with ``|alpha| == order``, grlex sorted."""
    if order < 0:
        return []
    out = [a for a in product(range(order + 1), repeat=n) if sum(a) == order]
    return sorted(out, key=grlex_key)


def multi_indices_range(n: int, lo: int, hi: int) -> list[MultiIndex]:
    """Multi-indices with ``lo <= |alpha| <= hi``."""
    out: list[MultiIndex] = []
    for m in range(lo, hi + 1):
        out.extend(multi_indices(n, m))
    return out


def factorial_multi(alpha: MultiIndex) -> int:
    return math.prod(math.factorial(a) for a in alpha)


class Polynomial:
    """Immutable polynomial in ``dimension`` real variables.

    >>> p = Polynomial(2, {(2, 2): 1.0})
    >>> p((1.0, 2.0))
    4.0
    """

    __slots__ = ("_dim", "_terms", "_exps", "_coeffs")

    def __init__(self, dimension: int, terms: Mapping[Sequence[int], float] | None = None):
        if int(dimension) < 1:
            raise ValueError("dimension must be a positive integer")
        dimension = int(dimension)
        clean: dict[MultiIndex, float] = {}
        for alpha, c in (terms or {}).items():
            alpha = tuple(int(e) for e in alpha)
            if len(alpha) != dimension:
                raise ValueError(f"multi-index {alpha} has wrong length for dimension {dimension}")
            if any(e < 0 for e in alpha):
                raise ValueError(f"negative exponent in {alpha}")
            c = float(c)
            if c != 0.0:
                clean[alpha] = clean.get(alpha, 0.0) + c
                if clean[alpha] == 0.0:
                    del clean[alpha]
        ordered = dict(sorted(clean.items(), key=lambda kv: grlex_key(kv[0])))
        self._dim = dimension
        self._terms = ordered
        self._exps = np.array(list(ordered), dtype=np.int64).reshape(len(ordered), dimension)
        self._coeffs = np.array(list(ordered.values()), dtype=float)

    # construction helpers

    @classmethod
    def zero(cls, dimension: int) -> "Polynomial":
        return cls(dimension)

    @classmethod
    def constant(cls, dimension: int, c: float) -> "Polynomial":
        return cls(dimension, {(0,) * dimension: c})

    @classmethod
    def variable(cls, dimension: int, i: int) -> "Polynomial":
        alpha = [0] * dimension
        alpha[i] = 1
        return cls(dimension, {tuple(alpha): 1.0})

    @classmethod
    def variables(cls, dimension: int) -> list["Polynomial"]:
        return [cls.variable(dimension, i) for i in range(dimension)]

    # basic properties

    @property
    def dimension(self) -> int:
        return self._dim

    @property
    def terms(self) -> dict[MultiIndex, float]:
        return dict(self._terms)

    @property
    def degree(self) -> int:
        if not self._terms:
            return 0
        return max(sum(a) for a in self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def is_constant(self) -> bool:
        return all(sum(a) == 0 for a in self._terms)

    def coeff(self, alpha: Sequence[int]) -> float:
        return self._terms.get(tuple(alpha), 0.0)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._dim == other._dim and self._terms == other._terms

    def __hash__(self) -> int:
        return hash((self._dim, tuple(self._terms.items())))

    def __repr__(self) -> str:
        return f"Polynomial({self._dim}, {self._terms!r})"

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for alpha, c in self._terms.items():
            mono = "*".join(
                f"x{i + 1}" if e == 1 else f"x{i + 1}^{e}" for i, e in enumerate(alpha) if e
            )
            parts.append(f"{c:g}" if not mono else (mono if c == 1 else f"{c:g}*{mono}"))
        return " + ".join(parts)

    # arithmetic

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other._dim != self._dim:
                raise ValueError("dimension mismatch")
            return other
        return Polynomial.constant(self._dim, float(other))

    def __add__(self, other) -> "Polynomial":
        other = self._coerce(other)
        out = dict(self._terms)
        for a, c in other._terms.items():
            out[a] = out.get(a, 0.0) + c
        return Polynomial(self._dim, out)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial(self._dim, {a: -c for a, c in self._terms.items()})

    def __sub__(self, other) -> "Polynomial":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Polynomial":
        return self._coerce(other) - self

    def __mul__(self, other) -> "Polynomial":
        other = self._coerce(other)
        out: dict[MultiIndex, float] = {}
        for a, ca in self._terms.items():
            for b, cb in other._terms.items():
                ab = tuple(x + y for x, y in zip(a, b))
                out[ab] = out.get(ab, 0.0) + ca * cb
        return Polynomial(self._dim, out)

    __rmul__ = __mul__

    def __pow__(self, e: int) -> "Polynomial":
        if int(e) != e or e < 0:
            raise ValueError("only non-negative integer powers")
        out = Polynomial.constant(self._dim, 1.0)
        for _ in range(int(e)):
            out = out * self
        return out

    # evaluation

    def eval_many(self, points) -> np.ndarray:
        """Evaluate at an array of points of shape ``(..., n)``.

        Terms are accumulated one at a time in grlex order, so the result for a
        given point does not depend on how many other points are in the batch.
        """
        x = np.asarray(points, dtype=float)
        if x.shape[-1:] != (self._dim,):
            raise ValueError(f"points must have trailing dimension {self._dim}, got shape {x.shape}")
        acc = np.zeros(x.shape[:-1])
        if not self._terms:
            return acc
        tables = []
        for i in range(self._dim):
            xi = x[..., i]
            pw = [np.ones_like(xi)]
            for _ in range(int(self._exps[:, i].max())):
                pw.append(pw[-1] * xi)
            tables.append(pw)
        for alpha, c in zip(self._terms, self._coeffs):
            mono = np.full(x.shape[:-1], c)
            for i, e in enumerate(alpha):
                if e:
                    mono = mono * tables[i][e]
            acc = acc + mono
        return acc

    def eval(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self._dim,):
            raise ValueError(f"point must have length {self._dim}, got shape {x.shape}")
        return float(self.eval_many(x[None, :])[0])

    __call__ = eval

    # calculus

    def derive(self, alpha: Sequence[int]) -> "Polynomial":
        """Partial derivative ``d^alpha p`` computed on coefficients."""
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self._dim:
            raise ValueError("dimension mismatch between polynomial and multi-index")
        if any(a < 0 for a in alpha):
            raise ValueError("negative derivative order")
        out: dict[MultiIndex, float] = {}
        for beta, c in self._terms.items():
            if any(b < a for a, b in zip(alpha, beta)):
                continue
            factor = 1
            for a, b in zip(alpha, beta):
                factor *= math.perm(b, a)
            out[tuple(b - a for a, b in zip(alpha, beta))] = c * factor
        return Polynomial(self._dim, out)

    def gradient(self) -> list["Polynomial"]:
        return [self.derive(_unit(self._dim, i)) for i in range(self._dim)]

    def hessian(self) -> list[list["Polynomial"]]:
        n = self._dim
        H: list[list[Polynomial | None]] = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                a = [0] * n
                a[i] += 1
                a[j] += 1
                H[i][j] = H[j][i] = self.derive(a)
        return H  # type: ignore[return-value]

    def laplacian(self) -> "Polynomial":
        out = Polynomial.zero(self._dim)
        for i in range(self._dim):
            a = [0] * self._dim
            a[i] = 2
            out = out + self.derive(a)
        return out

    def affine_rescale(self, y, h: float, tau: float) -> "Polynomial":
        """Return ``tau * (p(y + h x) - p(y))`` as a polynomial in ``x``.

        The coefficient of ``x^alpha`` is ``tau h^|alpha| d^alpha p(y) / alpha!``.
        """
        if not h > 0:
            raise ValueError("h must be positive")
        if not tau > 0:
            raise ValueError("tau must be positive")
        y = np.asarray(y, dtype=float)
        if y.shape != (self._dim,):
            raise ValueError("dimension mismatch")
        out: dict[MultiIndex, float] = {}
        for alpha in multi_indices_range(self._dim, 1, self.degree):
            d = self.derive(alpha)
            if d.is_zero():
                continue
            out[alpha] = tau * h ** sum(alpha) * d.eval(y) / factorial_multi(alpha)
        return Polynomial(self._dim, out)

    def dilate(self, s: float) -> "Polynomial":
        """``x -> p(s x)``."""
        return Polynomial(self._dim, {a: c * s ** sum(a) for a, c in self._terms.items()})

    # serialization

    def to_dict(self) -> dict:
        return {
            "dimension": self._dim,
            "terms": [{"exponents": list(a), "coeff": c} for a, c in self._terms.items()],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Polynomial":
        try:
            n = int(data["dimension"])
            raw = data["terms"]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed polynomial: {exc}") from None
        terms: dict[MultiIndex, float] = {}
        try:
            for t in raw:
                alpha = tuple(int(e) for e in t["exponents"])
                if alpha in terms:
                    raise ValueError(f"duplicate exponent vector {list(alpha)}")
                terms[alpha] = float(t["coeff"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed polynomial term: {exc}") from None
        return cls(n, terms)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Polynomial":
        return cls.from_dict(json.loads(text))


def _unit(n: int, i: int) -> MultiIndex:
    a = [0] * n
    a[i] = 1
    return tuple(a)

