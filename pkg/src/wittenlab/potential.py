"""Pointwise analysis of a polynomial potential.

Everything here is vectorized over arrays of points of shape ``(m, n)``; the
scalar entry points are thin wrappers that evaluate a batch of one.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from .linalg import jacobi_eigh, zero_threshold
from .poly import MultiIndex, Polynomial, multi_indices, multi_indices_range


@dataclass(frozen=True)
class Potential:
    """A polynomial potential ``V`` together with the derivative cap ``k``."""

    V: Polynomial
    k: int = 2
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise ValueError("k must be an integer >= 2")

    @property
    def dimension(self) -> int:
        return self.V.dimension

    @cached_property
    def orders(self) -> list[MultiIndex]:
        """Multi-indices with ``1 <= |alpha| <= k`` (mixed partials included)."""
        return multi_indices_range(self.dimension, 1, self.k)

    @cached_property
    def derivatives(self) -> dict[MultiIndex, Polynomial]:
        return {a: self.V.derive(a) for a in self.orders}

    @cached_property
    def top_derivatives(self) -> dict[MultiIndex, Polynomial]:
        """Derivatives of order exactly ``k + 1``."""
        return {a: self.V.derive(a) for a in multi_indices(self.dimension, self.k + 1)}

    @cached_property
    def grad_polys(self) -> list[Polynomial]:
        return self.V.gradient()

    @cached_property
    def hess_polys(self) -> list[list[Polynomial]]:
        return self.V.hessian()

    @cached_property
    def laplacian_poly(self) -> Polynomial:
        return self.V.laplacian()

    @property
    def C_k(self) -> float:
        """Recorded constant in ``ftilde <= f <= C_k (1 + ftilde)``."""
        return 2.0 * len(self.orders)

    # vectorized evaluations

    def _points(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[-1] != self.dimension:
            raise ValueError(f"points must have dimension {self.dimension}")
        return X

    def derivative_values(self, X) -> dict[MultiIndex, np.ndarray]:
        X = self._points(X)
        return {a: p.eval_many(X) for a, p in self.derivatives.items()}

    def ftilde_many(self, X, tau: float = 1.0) -> np.ndarray:
        if not tau > 0:
            raise ValueError("tau must be positive")
        X = self._points(X)
        out = np.zeros(X.shape[0])
        for a, p in self.derivatives.items():
            m = sum(a)
            out = out + (tau * np.abs(p.eval_many(X))) ** (1.0 / m)
        return out

    def f_many(self, X) -> np.ndarray:
        X = self._points(X)
        out = np.zeros(X.shape[0])
        for a, p in self.derivatives.items():
            m = sum(a)
            out = out + (1.0 + p.eval_many(X) ** 2) ** (1.0 / (2 * m))
        return out

    def grad_many(self, X) -> np.ndarray:
        X = self._points(X)
        return np.stack([g.eval_many(X) for g in self.grad_polys], axis=-1)

    def hess_many(self, X) -> np.ndarray:
        X = self._points(X)
        n = self.dimension
        H = np.empty((X.shape[0], n, n))
        for i in range(n):
            for j in range(i, n):
                H[:, i, j] = H[:, j, i] = self.hess_polys[i][j].eval_many(X)
        return H

    def laplacian_many(self, X) -> np.ndarray:
        return self.laplacian_poly.eval_many(self._points(X))

    def witten_term_many(self, X, tau: float) -> np.ndarray:
        """``tau^2 |grad V|^2 - tau Laplacian V`` at each point."""
        if not tau > 0:
            raise ValueError("tau must be positive")
        X = self._points(X)
        g = self.grad_many(X)
        return tau * tau * np.sum(g * g, axis=-1) - tau * self.laplacian_many(X)

    def analyze_many(self, X) -> dict[str, np.ndarray]:
        X = self._points(X)
        grad = self.grad_many(X)
        hess = self.hess_many(X)
        lam, vecs = jacobi_eigh(hess)
        lam = np.where(np.abs(lam) <= zero_threshold(hess)[:, None], 0.0, lam)
        pos = lam > 0.0
        return {
            "x": X,
            "grad": grad,
            "hess": hess,
            "lambdas": lam,
            "eigvecs": vecs,
            "i_pos": pos,
            "pos_sum": np.sum(np.where(pos, lam, 0.0), axis=-1),
            "m_neg": np.sum(np.where(pos, 0.0, -lam), axis=-1),
            "ftilde": self.ftilde_many(X),
            "f": self.f_many(X),
        }


@dataclass
class PointAnalysis:
    x: list[float]
    grad: list[float]
    hess: list[list[float]]
    lambdas: list[float]
    i_pos: list[int]
    m_neg: float
    pos_sum: float
    ftilde_val: float
    f_val: float
    C_k: float

    def to_dict(self) -> dict:
        return asdict(self)


def ftilde(pot: Potential, x) -> float:
    return float(pot.ftilde_many(x)[0])


def f_reg(pot: Potential, x) -> float:
    return float(pot.f_many(x)[0])


def ftilde_tau(pot: Potential, x, tau: float) -> float:
    return float(pot.ftilde_many(x, tau)[0])


def witten_potential_term(pot: Potential, tau: float, x) -> float:
    return float(pot.witten_term_many(x, tau)[0])


def analyze_point(pot: Potential, x) -> PointAnalysis:
    r = pot.analyze_many(x)
    return PointAnalysis(
        x=r["x"][0].tolist(),
        grad=r["grad"][0].tolist(),
        hess=r["hess"][0].tolist(),
        lambdas=r["lambdas"][0].tolist(),
        i_pos=[int(i) for i in np.flatnonzero(r["i_pos"][0])],
        m_neg=float(r["m_neg"][0]),
        pos_sum=float(r["pos_sum"][0]),
        ftilde_val=float(r["ftilde"][0]),
        f_val=float(r["f"][0]),
        C_k=pot.C_k,
    )


# example families


def vdelta_poly(delta: float) -> Polynomial:
    x1, x2 = Polynomial.variables(2)
    return x1**2 * x2**2 + delta * (x1**2 + x2**2)


def phidelta_poly(delta: float) -> Polynomial:
    x1, x2 = Polynomial.variables(2)
    return (x1**2 - x2) ** 2 + delta * x2**2


def vdelta(delta: float) -> Potential:
    return Potential(vdelta_poly(delta), k=4, name=f"vdelta:{delta:g}")


def phidelta(delta: float) -> Potential:
    return Potential(phidelta_poly(delta), k=4, name=f"phidelta:{delta:g}")


def match_family(V: Polynomial) -> tuple[str, float] | None:
    """Recognize the two planar example families by exact coefficient match."""
    if V.dimension != 2:
        return None
    d = V.coeff((2, 0))
    if V == vdelta_poly(d):
        return ("vdelta", d)
    d = V.coeff((0, 2)) - 1.0
    if V == phidelta_poly(d):
        return ("phidelta", d)
    return None
