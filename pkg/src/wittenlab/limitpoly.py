"""Limiting polynomials, the stability inequality, and no-local-minimum certificates.

A limiting polynomial of ``p`` at 0 is a coefficientwise limit of
``tau_j [p(y_j + h_j x) - p(y_j)]`` with ``y_j -> 0``, ``h_j -> 0`` and
``tau_j -> infinity``. Sequences are drawn from a power-law catalog so that
their limits can be detected from a finite schedule of ``j`` values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import jacobi_eigh, zero_threshold
from .poly import Polynomial, multi_indices_range
from .potential import Potential

CONVERGED = "converged"
DIVERGENT = "divergent"
INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class ScalingSequence:
    """``y_j = v / j^a``, ``tau_j = j^b``, ``h_j = j^-c``.

    ``v = None`` (or the zero vector) means ``y_j = 0`` for every ``j``.
    """

    v: tuple[float, ...] | None
    a: float
    b: float
    c: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.c > 0):
            raise ValueError("exponents a, b, c must be positive")

    def y(self, j: float, n: int) -> np.ndarray:
        if self.v is None:
            return np.zeros(n)
        v = np.asarray(self.v, dtype=float)
        if v.shape != (n,):
            raise ValueError("direction v has the wrong dimension")
        return v / j**self.a

    def tau(self, j: float) -> float:
        return float(j) ** self.b

    def h(self, j: float) -> float:
        return float(j) ** (-self.c)

    def member(self, p: Polynomial, j: float) -> Polynomial:
        """The ``j``-th polynomial ``tau_j [p(y_j + h_j x) - p(y_j)]``."""
        return p.affine_rescale(self.y(j, p.dimension), self.h(j), self.tau(j))

    def describe(self) -> str:
        return f"y=v/j^{self.a:g},tau=j^{self.b:g},h=j^-{self.c:g}"

    def to_dict(self) -> dict:
        return {"v": None if self.v is None else list(self.v), "a": self.a, "b": self.b, "c": self.c}


@dataclass
class LimitResult:
    status: str
    q: Polynomial | None
    members: list[Polynomial]
    j_schedule: list[float]
    coefficient_status: dict[tuple[int, ...], str]

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "q": None if self.q is None else self.q.to_dict(),
            "j_schedule": self.j_schedule,
            "members": [m.to_dict() for m in self.members],
            "coefficient_status": {",".join(map(str, a)): s for a, s in self.coefficient_status.items()},
        }


def _classify(seq: np.ndarray, tol: float) -> tuple[str, float]:
    """Classify one coefficient sequence as converged (with its limit), divergent or neither."""
    if np.max(np.abs(seq)) > 1.0 / tol:
        return DIVERGENT, math.inf
    tail = seq[-4:]
    scale = max(1.0, float(np.max(np.abs(tail))))
    if np.max(tail) - np.min(tail) <= tol * scale:
        return CONVERGED, float(tail[-1])
    d = np.diff(tail)
    ad = np.abs(d)
    same_sign = np.all(np.sign(d) == np.sign(d[0])) and d[0] != 0
    if same_sign and np.all(ad[1:] <= 0.9 * ad[:-1]):
        # geometric decay of increments: Aitken extrapolation on the last two triples
        def aitken(s0, s1, s2):
            den = (s2 - s1) - (s1 - s0)
            return s2 if den == 0 else s2 - (s2 - s1) ** 2 / den

        l1 = aitken(*tail[:3])
        l2 = aitken(*tail[1:])
        if abs(l1 - l2) <= tol * max(1.0, abs(l2)):
            return CONVERGED, float(l2)
        return INDETERMINATE, math.nan
    if np.all(ad > 0) and np.all(np.diff(np.abs(tail)) > 0) and np.all(ad[1:] >= ad[:-1]):
        return DIVERGENT, math.inf
    return INDETERMINATE, math.nan


def limit_polynomial(
    p: Polynomial, seq: ScalingSequence, j_schedule, tol: float = 1e-6
) -> LimitResult:
    """Coefficientwise limit of the scaled members along ``j_schedule``.

    Each coefficient sequence is classified on the last four schedule entries:
    Cauchy within ``tol`` (relative, floor 1), geometrically shrinking
    increments (limit by Aitken extrapolation, both estimates within ``tol``),
    or growing. A coefficient above ``1/tol`` anywhere is divergent.
    """
    js = [float(j) for j in j_schedule]
    if len(js) < 4:
        raise ValueError("j schedule needs at least 4 entries")
    if np.any(np.diff(js) <= 0) or js[0] <= 0:
        raise ValueError("j schedule must be positive and increasing")
    members = [seq.member(p, j) for j in js]
    alphas = multi_indices_range(p.dimension, 1, p.degree)
    coeffs = np.array([[m.coeff(a) for a in alphas] for m in members]).reshape(len(js), len(alphas))
    status: dict[tuple[int, ...], str] = {}
    limits: dict[tuple[int, ...], float] = {}
    for col, a in enumerate(alphas):
        s, lim = _classify(coeffs[:, col], tol)
        status[a] = s
        if s == CONVERGED and abs(lim) > tol:
            limits[a] = lim
    if any(s == DIVERGENT for s in status.values()):
        overall = DIVERGENT
    elif any(s == INDETERMINATE for s in status.values()):
        overall = INDETERMINATE
    else:
        overall = CONVERGED
    q = Polynomial(p.dimension, limits) if overall == CONVERGED else None
    return LimitResult(overall, q, members, js, status)


# certificate


@dataclass
class Certificate:
    q: Polynomial
    c_tilde: float
    status: str
    a_field: list[list[list[float]]]
    min_eig_a: list[float]
    lhs: list[float]
    rhs: list[float]
    violation_points: list[list[float]]
    grid_local_minima: list[list[float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "q": self.q.to_dict(),
            "c_tilde": self.c_tilde,
            "status": self.status,
            "min_eig_a": min(self.min_eig_a, default=None),
            "violation_points": self.violation_points,
            "grid_local_minima": self.grid_local_minima,
            "samples": len(self.lhs),
        }


CERTIFIED = "certified_no_local_min"
VIOLATED = "inequality_violated"
CONSTANT = "constant_q"


def hessian_frames(q: Polynomial, X) -> dict[str, np.ndarray]:
    """Hessian eigen-decomposition of ``q`` at each point, as ``Q^T diag(lam) Q = Hess``."""
    pot = Potential(q, k=2)
    H = pot.hess_many(X)
    lam, V = jacobi_eigh(H)
    lam = np.where(np.abs(lam) <= zero_threshold(H)[:, None], 0.0, lam)
    Q = np.swapaxes(V, -1, -2)  # rows are eigenvectors
    return {"hess": H, "lambdas": lam, "Q": Q, "grad": pot.grad_many(X)}


def coefficient_field(lam: np.ndarray, Q: np.ndarray, c_tilde: float) -> np.ndarray:
    """``a_ij = sum_k (b_kk q_ki)(b_kk q_kj)`` with ``b_kk = sqrt(C)`` on non-positive eigenvalues."""
    b2 = np.where(lam <= 0.0, c_tilde, 1.0)
    return np.einsum("...k,...ki,...kj->...ij", b2, Q, Q)


def no_local_min_certificate(q: Polynomial, c_tilde: float, samples) -> Certificate:
    if not c_tilde >= 1:
        raise ValueError("C~ must be >= 1")
    X = np.asarray(samples, dtype=float).reshape(-1, q.dimension)
    if q.is_constant():
        return Certificate(q, c_tilde, CONSTANT, [], [], [], [], [])
    fr = hessian_frames(q, X)
    a = coefficient_field(fr["lambdas"], fr["Q"], c_tilde)
    min_eig = np.linalg.eigvalsh(0.5 * (a + np.swapaxes(a, -1, -2)))[:, 0]
    lhs = np.einsum("...ij,...ij->...", a, fr["hess"])
    rhs = c_tilde * np.sum(fr["grad"] ** 2, axis=-1)
    ok = (min_eig >= 1.0 - 1e-9) & (lhs <= rhs + 1e-9)
    bad = X[~ok]
    status = CERTIFIED if bool(np.all(ok)) else VIOLATED
    return Certificate(
        q,
        c_tilde,
        status,
        a.tolist(),
        min_eig.tolist(),
        lhs.tolist(),
        rhs.tolist(),
        bad.tolist(),
        grid_local_minima(q, _bounding_box(X)),
    )


def _bounding_box(X: np.ndarray) -> list[tuple[float, float]]:
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    return [(float(a), float(b)) if b > a else (float(a) - 1.0, float(a) + 1.0) for a, b in zip(lo, hi)]


def grid_local_minima(q: Polynomial, box, points: int | None = None) -> list[list[float]]:
    """Brute-force scan for interior grid points not exceeding any neighbour (strictly below one)."""
    n = q.dimension
    if points is None:
        points = {1: 601, 2: 121, 3: 41}.get(n, 11)
    axes = [np.linspace(lo, hi, points) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    X = np.stack([m.ravel() for m in mesh], axis=-1)
    vals = q.eval_many(X).reshape(mesh[0].shape)
    interior = tuple(slice(1, -1) for _ in range(n))
    centre = vals[interior]
    is_min = np.ones(centre.shape, dtype=bool)
    strict = np.zeros(centre.shape, dtype=bool)
    for offset in np.ndindex(*(3,) * n):
        if all(o == 1 for o in offset):
            continue
        sl = tuple(slice(o, o + s) for o, s in zip(offset, centre.shape))
        nb = vals[sl]
        is_min &= centre <= nb
        strict |= centre < nb
    idx = np.argwhere(is_min & strict)
    return [[float(axes[d][i + 1]) for d, i in enumerate(row)] for row in idx]


# stability


def mass_terms(p: Polynomial, X) -> dict[str, np.ndarray]:
    """Positive eigenvalue sum, negative mass and squared gradient of ``p``."""
    fr = hessian_frames(p, X)
    lam = fr["lambdas"]
    return {
        "pos_sum": np.sum(np.where(lam > 0, lam, 0.0), axis=-1),
        "m_neg": np.sum(np.where(lam > 0, 0.0, -lam), axis=-1),
        "grad2": np.sum(fr["grad"] ** 2, axis=-1),
    }


def sup_ratio(p: Polynomial, X) -> float:
    """``sup pos_sum / (m_neg + |grad|^2)`` over ``X``; ``0/0`` counts as 0, ``c/0`` as infinity."""
    t = mass_terms(p, X)
    lhs = t["pos_sum"]
    rhs = t["m_neg"] + t["grad2"]
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(lhs > 0, np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), np.inf), 0.0)
    return float(np.max(r)) if r.size else 0.0


def ball_samples(n: int, sigma: float, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(count, n))
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    r = sigma * rng.random(count) ** (1.0 / n)
    pts = d * r[:, None]
    return np.concatenate([np.zeros((1, n)), pts])


def box_samples(box, points: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, points) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass
class StabilityReport:
    hypothesis_constant: float
    hypothesis_holds: bool
    sigma: float
    C: float
    limits: list[dict]

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "C": self.C,
            "hypothesis_constant": self.hypothesis_constant,
            "hypothesis_holds": self.hypothesis_holds,
            "limits": self.limits,
        }


def stability_check(
    p: Polynomial,
    sigma: float,
    C: float,
    sequences,
    samples=None,
    j_schedule=(4, 8, 16, 32, 64),
    tol: float = 1e-6,
    seed: int = 42,
) -> StabilityReport:
    """Check the hypothesis on ``B_sigma`` and estimate ``C~`` for each limit ``q``.

    ``samples`` are the points of R^n (restricted to a box) used for the
    conclusion; by default a grid on ``[-2, 2]^n``.
    """
    if not sigma > 0 or not C > 0:
        raise ValueError("sigma and C must be positive")
    n = p.dimension
    ball = ball_samples(n, sigma, 2000, seed)
    hyp = sup_ratio(p, ball)
    if samples is None:
        samples = box_samples([(-2.0, 2.0)] * n, {1: 401, 2: 61}.get(n, 15))
    X = np.asarray(samples, dtype=float).reshape(-1, n)
    out = []
    for seq in sequences:
        res = limit_polynomial(p, seq, j_schedule, tol)
        entry = {"sequence": seq.to_dict(), "status": res.status}
        if res.converged:
            entry["q"] = res.q.to_dict()
            ratio = sup_ratio(res.q, X)
            entry["c_tilde"] = max(1.0, ratio) if math.isfinite(ratio) else None
            entry["finite_on_samples"] = math.isfinite(ratio)
        out.append(entry)
    return StabilityReport(hyp, hyp <= C, sigma, C, out)


def parse_sequence(spec: str, v=None, a=None, b=None, c=None) -> ScalingSequence:
    """Parse ``"y=v/j^a,tau=j^b,h=j^-c"``; symbolic exponents are taken from the keywords."""
    fields = {}
    for part in spec.replace(" ", "").split(","):
        if "=" not in part:
            raise ValueError(f"cannot parse sequence component {part!r}")
        key, val = part.split("=", 1)
        fields[key] = val

    def exponent(text: str, prefix: str, given):
        if not text.startswith(prefix):
            raise ValueError(f"expected {prefix}... in {text!r}")
        e = text[len(prefix):]
        if e in ("a", "b", "c"):
            if given is None:
                raise ValueError(f"exponent {e} not supplied")
            return float(given)
        return float(e)

    try:
        ea = exponent(fields["y"], "v/j^", a)
        eb = exponent(fields["tau"], "j^", b)
        ec = exponent(fields["h"], "j^-", c)
    except KeyError as exc:
        raise ValueError(f"sequence is missing {exc}") from None
    vv = None if v is None else tuple(float(t) for t in v)
    if vv is not None and not any(vv):
        vv = None
    return ScalingSequence(vv, ea, eb, ec)
