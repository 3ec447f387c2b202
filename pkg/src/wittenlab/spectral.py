"""Finite-difference Witten Laplacian on a box with Dirichlet boundary, and probes.

The operator ``-Laplacian + tau^2 |grad V|^2 - tau Laplacian(V)`` is discretized with
the standard (2n+1)-point stencil on the interior nodes of a tensor grid. The
potential term is evaluated exactly from the polynomial.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal
from scipy.sparse.linalg import splu

from .localization import BoxGrid, PartitionOfUnity, bump
from .potential import Potential

MAX_UNKNOWNS = 10**6
MIN_POINTS = 8


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("WITTEN_THREADS", "1")))
    except ValueError:
        return 1


def make_grid(box, resolution) -> BoxGrid:
    """Grid with ``resolution`` nodes per axis, boundary nodes included."""
    grid = BoxGrid.make(box, resolution)
    if grid.ndim > 3:
        raise ValueError("at most 3 dimensions are supported")
    if any(m < MIN_POINTS for m in grid.shape):
        raise ValueError(f"need at least {MIN_POINTS} points per axis")
    if math.prod(m - 2 for m in grid.shape) > MAX_UNKNOWNS:
        raise ValueError("too many unknowns")
    return grid


def interior_points(grid: BoxGrid) -> np.ndarray:
    axes = [ax[1:-1] for ax in grid.axes]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def interior_shape(grid: BoxGrid) -> tuple[int, ...]:
    return tuple(m - 2 for m in grid.shape)


class SparseSymOperator:
    """Symmetric matrix in compressed-row form."""

    def __init__(self, matrix, symmetric: bool = True):
        self.matrix = sp.csr_matrix(matrix)
        self.matrix.sort_indices()
        self.symmetric = symmetric

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def indptr(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def data(self) -> np.ndarray:
        return self.matrix.data

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def matvec(self, v) -> np.ndarray:
        return self.matrix @ v

    __matmul__ = matvec

    def shifted(self, c: float) -> "SparseSymOperator":
        return SparseSymOperator(self.matrix + c * sp.identity(self.dimension, format="csr"))

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def asymmetry(self) -> float:
        d = self.matrix - self.matrix.T
        return float(abs(d).max()) if d.nnz else 0.0


def laplacian_1d(m: int, h: float) -> sp.csr_matrix:
    main = np.full(m, 2.0 / (h * h))
    off = np.full(m - 1, -1.0 / (h * h))
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def discrete_laplacian(grid: BoxGrid) -> sp.csr_matrix:
    """``-Laplacian`` with Dirichlet boundary on the interior nodes (C order)."""
    shape = interior_shape(grid)
    L = sp.csr_matrix((math.prod(shape), math.prod(shape)))
    for d, (m, h) in enumerate(zip(shape, grid.spacing)):
        mats = [sp.identity(k, format="csr") for k in shape]
        mats[d] = laplacian_1d(m, h)
        term = mats[0]
        for M in mats[1:]:
            term = sp.kron(term, M, format="csr")
        L = L + term
    return L.tocsr()


def assemble_witten(pot: Potential, tau: float, grid: BoxGrid) -> SparseSymOperator:
    if not tau > 0:
        raise ValueError("tau must be positive")
    if grid.ndim != pot.dimension:
        raise ValueError("grid dimension does not match the potential")
    if any(m < MIN_POINTS for m in grid.shape):
        raise ValueError(f"need at least {MIN_POINTS} points per axis")
    w = pot.witten_term_many(interior_points(grid), tau)
    return SparseSymOperator(discrete_laplacian(grid) + sp.diags(w, format="csr"))


# Lanczos


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    residuals: np.ndarray
    converged: np.ndarray
    iterations: int
    restarts: int = 0
    vectors: np.ndarray | None = field(default=None, repr=False)

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))

    def rows(self) -> list[tuple[int, float, float, bool]]:
        return [
            (i, float(l), float(r), bool(c))
            for i, (l, r, c) in enumerate(zip(self.eigenvalues, self.residuals, self.converged))
        ]

    def to_csv(self) -> str:
        lines = ["index,eigenvalue,residual,converged"]
        lines += [f"{i},{l!r},{r!r},{str(c).lower()}" for i, l, r, c in self.rows()]
        return "\n".join(lines) + "\n"


def _as_operator(op) -> SparseSymOperator:
    if isinstance(op, SparseSymOperator):
        return op
    return SparseSymOperator(op)


def _lanczos_run(apply, n, want, locked, rng, max_iter, transform, largest, matvec, tol):
    """One Lanczos run on the complement of ``locked`` (rows are orthonormal vectors)."""
    max_iter = min(max_iter, n - locked.shape[0])
    Q = np.zeros((max_iter, n))
    alphas: list[float] = []
    betas: list[float] = []
    restarts = 0

    def fresh():
        v = rng.standard_normal(n)
        for _ in range(2):
            if locked.shape[0]:
                v -= locked.T @ (locked @ v)
            if j:
                v -= Q[:j].T @ (Q[:j] @ v)
        return v / np.linalg.norm(v)

    j = 0
    q = fresh()
    ritz = None
    while j < max_iter:
        Q[j] = q
        w = apply(q)
        alpha = float(q @ w)
        w = w - alpha * q
        if j:
            w = w - betas[-1] * Q[j - 1]
        for _ in range(2):
            if locked.shape[0]:
                w -= locked.T @ (locked @ w)
            w -= Q[: j + 1].T @ (Q[: j + 1] @ w)
        beta = float(np.linalg.norm(w))
        alphas.append(alpha)
        j += 1
        scale = max(abs(alpha), *(abs(b) for b in betas[-1:]), 1.0)
        breakdown = beta <= 1e-12 * scale
        if j >= want and (j % 5 == 0 or breakdown or j == max_iter):
            theta, S = eigh_tridiagonal(np.array(alphas), np.array(betas)) if j > 1 else (
                np.array(alphas), np.ones((1, 1)))
            order = np.argsort(-theta if largest else theta, kind="stable")[:want]
            est = np.abs(beta * S[-1, order])
            if breakdown or j == max_iter or np.all(est <= 0.1 * tol * max(1.0, np.max(np.abs(theta)))):
                Y = S[:, order].T @ Q[:j]
                lam = transform(theta[order])
                res = np.array([np.linalg.norm(matvec(y) - l * y) for y, l in zip(Y, lam)])
                ritz = (lam, Y, res)
                if np.all(res <= tol) or j == max_iter:
                    break
        if breakdown:
            if j >= max_iter:
                break
            restarts += 1
            if restarts > 3:
                break
            betas.append(0.0)
            q = fresh()
        else:
            betas.append(beta)
            q = w / beta
    if ritz is None or ritz[1].shape[1] != n or len(ritz[0]) < min(want, j):
        theta, S = eigh_tridiagonal(np.array(alphas), np.array(betas[: j - 1])) if j > 1 else (
            np.array(alphas), np.ones((1, 1)))
        order = np.argsort(-theta if largest else theta, kind="stable")[:want]
        Y = S[:, order].T @ Q[:j]
        lam = transform(theta[order])
        res = np.array([np.linalg.norm(matvec(y) - l * y) for y, l in zip(Y, lam)])
        ritz = (lam, Y, res)
    return ritz[0], ritz[1], ritz[2], j, restarts


def lanczos_smallest(
    op,
    count: int,
    tol: float = 1e-8,
    max_iter: int | None = None,
    seed: int = 42,
    sigma: float | None = None,
    max_runs: int | None = None,
) -> SpectrumResult:
    """Smallest ``count`` eigenpairs by Lanczos with full reorthogonalization.

    With ``sigma`` set, the recurrence runs on ``(A - sigma I)^-1`` (sparse LU)
    and ``sigma`` must lie below the spectrum. Converged pairs are locked and the
    iteration is repeated on their orthogonal complement until a run finds
    nothing below the current ``count``-th value, so repeated eigenvalues are
    not missed. A pair is converged when ``||A v - lambda v|| <= tol``.
    """
    A = _as_operator(op)
    n = A.dimension
    if count < 1 or count > n / 4:
        raise ValueError("count must satisfy 1 <= count <= dimension/4")
    rng = np.random.default_rng(seed)
    if sigma is None:
        apply = A.matvec
        transform = lambda th: th  # noqa: E731
        largest = False
        default_iter = n
    else:
        lu = splu((A.matrix - sigma * sp.identity(n, format="csr")).tocsc())
        apply = lu.solve
        transform = lambda th: sigma + 1.0 / th  # noqa: E731
        largest = True
        default_iter = min(n, max(4 * count + 40, 80))
    max_iter = default_iter if max_iter is None else max_iter
    max_runs = 2 * count + 2 if max_runs is None else max_runs

    locked = np.zeros((0, n))
    total_iter = 0
    total_restarts = 0
    pool_vals, pool_vecs, pool_res = [], [], []
    pending = ([], [], [])
    for _ in range(max_runs):
        if locked.shape[0] >= n:
            break
        want = min(count, n - locked.shape[0])
        lam, Y, r, its, rs = _lanczos_run(
            apply, n, want, locked, rng, max_iter, transform, largest, A.matvec, tol
        )
        total_iter += its
        total_restarts += rs
        ok = r <= tol
        current = np.sort(np.array(pool_vals))[:count]
        threshold = current[-1] if current.size >= count else np.inf
        scale = 1e-10 * max(1.0, abs(threshold)) if np.isfinite(threshold) else 0.0
        found_new = bool(np.any(lam[ok] < threshold - scale))
        pool_vals += list(lam[ok])
        pool_vecs += list(Y[ok])
        pool_res += list(r[ok])
        pending = (list(lam[~ok]), list(Y[~ok]), list(r[~ok]))
        if not ok.any():
            break
        conv = np.sort(np.array(pool_vals))[:count]
        cut = conv[-1] if conv.size >= count else np.inf
        if not found_new and not np.any(lam[~ok] < cut):
            break
        # lock what converged and search the orthogonal complement again
        locked = np.array(pool_vecs)
    if len(pool_vals) < count:
        # unconverged pairs only fill up a short answer and stay flagged
        pool_vals += pending[0]
        pool_vecs += pending[1]
        pool_res += pending[2]
    order = np.argsort(pool_vals, kind="stable")[:count]
    vals = np.array(pool_vals)[order]
    res = np.array(pool_res)[order]
    vecs = np.array(pool_vecs)[order]
    return SpectrumResult(vals, res, res <= tol, total_iter, total_restarts, vecs)


def spectral_floor(pot: Potential, tau: float, grid: BoxGrid) -> float:
    """``-tau max|Laplacian V|`` over the interior nodes; the discrete spectrum should not go far below."""
    return -tau * float(np.max(np.abs(pot.laplacian_many(interior_points(grid)))))


def dense_eigenvalues(op) -> np.ndarray:
    return np.linalg.eigvalsh(_as_operator(op).to_dense())


class InsufficientResolutionError(RuntimeError):
    pass


def counting_function(res: SpectrumResult, threshold: float) -> int:
    """Number of eigenvalues ``<= threshold``; refuses to answer if it may undercount."""
    below = res.eigenvalues <= threshold
    if np.any(below & ~res.converged):
        raise InsufficientResolutionError("unconverged eigenvalues below the threshold")
    conv = res.eigenvalues[res.converged]
    if conv.size == 0 or np.max(conv) <= threshold:
        raise InsufficientResolutionError(
            "all computed eigenvalues lie below the threshold; compute more"
        )
    return int(np.count_nonzero(below))


def spectral_shift(op: SparseSymOperator) -> float:
    """A shift strictly below the spectrum: the discrete Laplacian part is positive."""
    A = op.matrix
    off = A - sp.diags(A.diagonal())
    # Gershgorin lower bound
    lower = float(np.min(A.diagonal() - np.asarray(abs(off).sum(axis=1)).ravel()))
    return lower - 1.0


def count_below(
    pot: Potential, tau: float, grid: BoxGrid, threshold: float, tol: float = 1e-6, seed: int = 42,
    start: int = 16, cap: int = 2048,
) -> tuple[int, SpectrumResult]:
    """Eigenvalue count below ``threshold``, doubling the number of computed pairs as needed."""
    A = assemble_witten(pot, tau, grid)
    w = A.diagonal() - np.sum([2.0 / h**2 for h in grid.spacing])
    sigma = min(float(np.min(w)), spectral_shift(A)) - 1.0
    # a shift far below the spectrum clusters the inverted eigenvalues; move it
    # up to just under the lowest eigenvalue once that one is known
    low = lanczos_smallest(A, 1, tol=tol, seed=seed, sigma=sigma)
    if low.all_converged:
        sigma = float(low.eigenvalues[0]) - 1.0
    m = start
    while True:
        m = min(m, A.dimension // 4)
        res = lanczos_smallest(A, m, tol=tol, seed=seed, sigma=sigma)
        try:
            return counting_function(res, threshold), res
        except InsufficientResolutionError:
            if m >= min(cap, A.dimension // 4) or not res.all_converged:
                raise
            m *= 2


@dataclass
class ProbeResult:
    half_widths: list[float]
    counts: list[int]
    verdict: str
    h: float
    threshold: float
    lowest: list[float]

    def to_dict(self) -> dict:
        return {
            "half_widths": self.half_widths,
            "counts": self.counts,
            "verdict": self.verdict,
            "h": self.h,
            "lambda": self.threshold,
            "lowest_eigenvalue": self.lowest,
        }


def box_stability_probe(
    pot: Potential, tau: float, threshold: float, half_widths, h: float, tol: float = 1e-6,
    seed: int = 42,
) -> ProbeResult:
    """Count eigenvalues below ``threshold`` on growing boxes ``[-L, L]^n`` at fixed spacing.

    ``stabilizes`` if the last two counts agree, ``grows`` if the counts
    strictly increase over at least three boxes, ``indeterminate`` otherwise.
    """
    Ls = [float(L) for L in half_widths]
    if np.any(np.diff(Ls) <= 0):
        raise ValueError("boxes must be nested and increasing")
    grids = []
    for L in Ls:
        cells = 2 * L / h
        if abs(cells - round(cells)) > 1e-9 * cells:
            raise ValueError(f"box half-width {L} is not a multiple of h/2")
        grids.append(make_grid([(-L, L)] * pot.dimension, int(round(cells)) + 1))

    def job(grid):
        return count_below(pot, tau, grid, threshold, tol=tol, seed=seed)

    with ThreadPoolExecutor(max_workers=worker_count()) as ex:
        results = list(ex.map(job, grids))
    counts = [c for c, _ in results]
    lowest = [float(r.eigenvalues[0]) for _, r in results]
    if len(counts) >= 3 and all(b > a for a, b in zip(counts, counts[1:])):
        verdict = "grows"
    elif len(counts) >= 2 and counts[-1] == counts[-2]:
        verdict = "stabilizes"
    else:
        verdict = "indeterminate"
    return ProbeResult(Ls, counts, verdict, h, threshold, lowest)


# IMS localization


def _interior(grid: BoxGrid, u_full: np.ndarray) -> np.ndarray:
    return u_full[tuple(slice(1, -1) for _ in range(grid.ndim))].ravel()


def ims_identity_check(pot: Potential, tau: float, part: PartitionOfUnity, u) -> dict:
    """Compare ``<A u, u>`` with ``sum <A phi u, phi u> - sum ||(grad phi) u||^2`` on the grid.

    The gradient term uses forward differences of ``phi`` on grid edges weighted
    by the edge average of ``u^2``, the same staggering as the difference
    operator, so the discrepancy is governed by the smoothness of ``u``.
    """
    grid = part.grid
    u = np.asarray(u, dtype=float).reshape(grid.shape)
    if np.any(u[~grid.interior_mask()] != 0):
        raise ValueError("u must vanish on the boundary of the box")
    A = assemble_witten(pot, tau, grid)
    vol = float(np.prod(grid.spacing))
    ui = _interior(grid, u)
    lhs = vol * float(ui @ A.matvec(ui))
    local = 0.0
    correction = 0.0
    for blk, ph in zip(part.blocks, part.phi):
        v = np.zeros(grid.shape)
        v[blk] = ph * u[blk]
        vi = _interior(grid, v)
        local += vol * float(vi @ A.matvec(vi))
        u2 = u[blk] ** 2
        for d, h in enumerate(grid.spacing):
            lo = [slice(None)] * grid.ndim
            hi = [slice(None)] * grid.ndim
            lo[d] = slice(None, -1)
            hi[d] = slice(1, None)
            dphi = np.diff(ph, axis=d) / h
            w = 0.5 * (u2[tuple(lo)] + u2[tuple(hi)])
            correction += vol * float(np.sum(dphi * dphi * w))
    rhs = local - correction
    return {
        "lhs": lhs,
        "rhs": rhs,
        "localized": local,
        "correction": correction,
        "residual": abs(lhs - rhs) / (abs(lhs) + 1.0),
    }


# maximal estimate


def bump_function(grid: BoxGrid, center, rho: float) -> np.ndarray:
    """``exp(1 - 1/(1 - |x-a|^2/rho^2))`` on the full grid."""
    P = grid.points()
    s = np.linalg.norm(P - np.asarray(center, dtype=float), axis=-1) / rho
    return bump(s).reshape(grid.shape)


def maximal_estimate_probe(
    pot: Potential, tau: float, centers, rho: float, grid: BoxGrid
) -> dict:
    """Ratios ``||ftilde_tau u||^2 / (<A u, u> + ||u||^2)`` over translated bumps."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    A = assemble_witten(pot, tau, grid)
    ft = pot.ftilde_many(interior_points(grid), tau)
    ratios = []
    for a in centers:
        u = bump_function(grid, a, rho)
        if np.any(u[~grid.interior_mask()] != 0):
            raise ValueError(f"bump at {list(a)} is not supported in the grid interior")
        ui = _interior(grid, u)
        num = float(np.sum((ft * ui) ** 2))
        den = float(ui @ A.matvec(ui)) + float(ui @ ui)
        ratios.append(num / den)
    ratios_arr = np.array(ratios)
    return {
        "tau": tau,
        "centers": [list(map(float, a)) for a in centers],
        "ratios": ratios,
        "max_ratio": float(ratios_arr.max()),
        "min_ratio": float(ratios_arr.min()),
    }


# m_tau


def m_tau(tau: float, tau0: float, C: float) -> float:
    """``max(1, sqrt((2C-1)/(2C)) tau0/tau)``; brackets ``(m tau/tau0)^2`` in ``[1 - 1/(2C), 1]``."""
    if not (0 < tau < tau0):
        raise ValueError("need 0 < tau < tau0")
    if not C >= 1:
        raise ValueError("need C >= 1")
    m = max(1.0, math.sqrt((2 * C - 1) / (2 * C)) * tau0 / tau)
    b = (m * tau / tau0) ** 2
    eps = 8 * np.finfo(float).eps
    assert 1 - 1 / (2 * C) - eps <= b <= 1 + eps, (tau, tau0, C, b)
    return m
