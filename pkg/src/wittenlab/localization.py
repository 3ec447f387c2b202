"""Slowly varying metric ``eps f(x)^2 |dx|^2`` and a gridded partition of unity for it.

Balls of the metric around ``x`` have Euclidean radius proportional to
``1/f(x)``. The partition is built on a bounded box: greedy centres, smooth
compactly supported bumps, and quadratic normalization so that the squares
sum to one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .potential import Potential

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class SlowMetric:
    pot: Potential
    eps: float = 0.25
    r: float = 0.5
    C_star: float = 1.0

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1]")
        if not 0 < self.r < 1:
            raise ValueError("r must lie in (0, 1)")
        if not self.C_star >= 1:
            raise ValueError("C_* must be >= 1")

    def ball_radius(self, x) -> np.ndarray:
        """Euclidean radius ``r / (sqrt(2) f(x))`` of the partition balls."""
        return self.r / (SQRT2 * self.pot.f_many(x))

    def g(self, x, T) -> np.ndarray:
        T = np.asarray(T, dtype=float)
        return self.eps * self.pot.f_many(x) ** 2 * np.sum(T * T, axis=-1)


def _check_r(r: float) -> None:
    if not 0 < r < 1:
        raise ValueError("r must lie in (0, 1)")


def unit_ball_samples(n: int, count: int, seed: int) -> np.ndarray:
    """Boundary directions plus low-discrepancy interior points of the unit ball."""
    if n == 1:
        bnd = np.array([[1.0], [-1.0]])
    else:
        rng = np.random.default_rng(seed)
        d = rng.normal(size=(max(count, 2 * n), n))
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        bnd = np.concatenate([np.eye(n), -np.eye(n), d])
    u = qmc.Halton(d=n, scramble=True, seed=seed).random(count)
    cube = 2.0 * u - 1.0
    inner = cube[np.sum(cube * cube, axis=-1) <= 1.0]
    return np.concatenate([np.zeros((1, n)), bnd, inner])


def psi_r(pot: Potential, x, r: float, count: int = 512, seed: int = 42) -> float:
    """Max of ``f(z)/f(x)`` over the closed ball ``|z - x| <= r / f(x)``, on samples."""
    _check_r(r)
    x = np.asarray(x, dtype=float).reshape(pot.dimension)
    fx = float(pot.f_many(x)[0])
    Z = x + (r / fx) * unit_ball_samples(pot.dimension, count, seed)
    return float(np.max(pot.f_many(Z)) / fx)


def estimate_slow_variation(pot: Potential, r: float, samples) -> float:
    """Empirical ``C_*``: max of ``f(y)/f(x)`` and its inverse over sample pairs with ``|y - x| <= r/f(x)``.

    Only pairs drawn from ``samples`` are used, so the estimate is nondecreasing in ``r``.
    """
    _check_r(r)
    X = np.asarray(samples, dtype=float).reshape(-1, pot.dimension)
    f = pot.f_many(X)
    tree = cKDTree(X)
    best = 1.0
    radii = r / f
    for i, nbrs in enumerate(tree.query_ball_point(X, radii * (1 + 1e-12))):
        nbrs = np.asarray(nbrs, dtype=int)
        if nbrs.size == 0:
            continue
        d = np.linalg.norm(X[nbrs] - X[i], axis=-1)
        nbrs = nbrs[d <= radii[i]]
        q = f[nbrs] / f[i]
        best = max(best, float(np.max(q)), float(np.max(1.0 / q)))
    return best


def bump(s) -> np.ndarray:
    """``exp(1 - 1/(1 - s^2))`` on ``|s| < 1``, zero elsewhere."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    with np.errstate(divide="ignore", over="ignore"):
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


@dataclass
class BoxGrid:
    """Tensor grid including the boundary nodes of an axis-aligned box."""

    box: tuple[tuple[float, float], ...]
    shape: tuple[int, ...]

    @classmethod
    def make(cls, box, resolution) -> "BoxGrid":
        box = tuple((float(lo), float(hi)) for lo, hi in box)
        if isinstance(resolution, int):
            resolution = (resolution,) * len(box)
        shape = tuple(int(m) for m in resolution)
        if any(m < 2 for m in shape):
            raise ValueError("need at least two nodes per axis")
        return cls(box, shape)

    @property
    def ndim(self) -> int:
        return len(self.box)

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(hi - lo) / (m - 1) for (lo, hi), m in zip(self.box, self.shape)])

    @property
    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, m) for (lo, hi), m in zip(self.box, self.shape)]

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def interior_mask(self) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        for d in range(self.ndim):
            idx = [slice(None)] * self.ndim
            idx[d] = 0
            mask[tuple(idx)] = False
            idx[d] = -1
            mask[tuple(idx)] = False
        return mask


@dataclass
class PartitionOfUnity:
    """Gridded quadratic partition of unity.

    ``blocks[mu]`` is a tuple of slices into the grid and ``phi[mu]`` holds the
    values of the mu-th function on that block (zero outside).
    """

    grid: BoxGrid
    eps: float
    r: float
    centers: np.ndarray
    radii: np.ndarray
    blocks: list[tuple[slice, ...]]
    phi: list[np.ndarray]

    def __len__(self) -> int:
        return len(self.phi)

    def dense(self, mu: int) -> np.ndarray:
        out = np.zeros(self.grid.shape)
        out[self.blocks[mu]] = self.phi[mu]
        return out

    def sum_of_squares(self) -> np.ndarray:
        S = np.zeros(self.grid.shape)
        for blk, ph in zip(self.blocks, self.phi):
            S[blk] += ph * ph
        return S

    def overlap_counts(self) -> np.ndarray:
        N = np.zeros(self.grid.shape, dtype=int)
        for blk, ph in zip(self.blocks, self.phi):
            N[blk] += ph > 0
        return N

    def to_json_dict(self) -> dict:
        return {
            "box": [list(b) for b in self.grid.box],
            "shape": list(self.grid.shape),
            "eps": self.eps,
            "r": self.r,
            "centers": self.centers.tolist(),
            "radii": self.radii.tolist(),
            "blocks": [[[s.start, s.stop] for s in blk] for blk in self.blocks],
        }

    def write(self, json_path, csv_path) -> None:
        """Metadata as JSON, per-node values as CSV rows ``mu,flat_index,phi``."""
        with open(json_path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)
        with open(csv_path, "w") as fh:
            fh.write("mu,node,phi\n")
            for mu in range(len(self)):
                dense = self.dense(mu).ravel()
                for i in np.flatnonzero(dense):
                    fh.write(f"{mu},{i},{float(dense[i])!r}\n")


def _block(grid: BoxGrid, center: np.ndarray, radius: float) -> tuple[slice, ...]:
    sl = []
    for d, ((lo, _), m) in enumerate(zip(grid.box, grid.shape)):
        h = grid.spacing[d]
        a = max(0, int(math.floor((center[d] - radius - lo) / h)))
        b = min(m, int(math.ceil((center[d] + radius - lo) / h)) + 1)
        sl.append(slice(a, b))
    return tuple(sl)


def _block_points(grid: BoxGrid, blk: tuple[slice, ...]) -> np.ndarray:
    axes = [ax[s] for ax, s in zip(grid.axes, blk)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


def greedy_centers(pot: Potential, grid: BoxGrid, r: float) -> tuple[np.ndarray, np.ndarray]:
    """Scan nodes in lexicographic order; a node becomes a centre unless already
    within ``radius/sqrt(2)`` of an earlier centre."""
    covered = np.zeros(grid.shape, dtype=bool)
    flat = covered.ravel()  # view
    axes = grid.axes
    centers, radii = [], []
    ptr = 0
    total = flat.size
    while ptr < total:
        free = np.flatnonzero(~flat[ptr:])
        if free.size == 0:
            break
        ptr += int(free[0])
        idx = np.unravel_index(ptr, grid.shape)
        c = np.array([axes[d][i] for d, i in enumerate(idx)])
        rad = float(r / (SQRT2 * pot.f_many(c)[0]))
        centers.append(c)
        radii.append(rad)
        blk = _block(grid, c, rad)
        P = _block_points(grid, blk)
        dist = np.linalg.norm(P - c, axis=-1)
        covered[blk] |= dist < rad / SQRT2
        covered[idx] = True
        ptr += 1
    return np.array(centers).reshape(-1, grid.ndim), np.array(radii)


def partition_from_centers(
    pot: Potential, grid: BoxGrid, eps: float, r: float, centers, radii=None
) -> PartitionOfUnity:
    """Normalized bumps ``phi_mu = chi_mu / sqrt(sum chi^2)`` around given centres."""
    centers = np.asarray(centers, dtype=float).reshape(-1, grid.ndim)
    if radii is None:
        radii = r / (SQRT2 * pot.f_many(centers))
    radii = np.asarray(radii, dtype=float)
    S = np.zeros(grid.shape)
    blocks, chis = [], []
    for c, rad in zip(centers, radii):
        blk = _block(grid, c, rad)
        P = _block_points(grid, blk)
        chi = bump(np.linalg.norm(P - c, axis=-1) / rad)
        blocks.append(blk)
        chis.append(chi)
        S[blk] += chi * chi
    root = np.sqrt(S)
    phis = []
    for blk, chi in zip(blocks, chis):
        den = root[blk]
        phis.append(np.divide(chi, den, out=np.zeros_like(chi), where=den > 0))
    return PartitionOfUnity(grid, eps, r, centers, radii, blocks, phis)


class PartitionError(RuntimeError):
    pass


def build_partition(pot: Potential, box, eps: float, r: float, resolution) -> PartitionOfUnity:
    """Greedy cover of the grid by metric balls and the associated partition of unity."""
    SlowMetric(pot, eps, r)
    grid = BoxGrid.make(box, resolution)
    if grid.ndim != pot.dimension:
        raise ValueError("box dimension does not match the potential")
    min_radius = float(np.min(r / (SQRT2 * pot.f_many(grid.points()))))
    if not np.max(grid.spacing) < min_radius / 4:
        raise ValueError(
            f"grid too coarse: spacing {np.max(grid.spacing):.4g} must be below {min_radius / 4:.4g}"
        )
    centers, radii = greedy_centers(pot, grid, r)
    part = partition_from_centers(pot, grid, eps, r, centers, radii)
    if np.any(part.sum_of_squares() < 1e-300):
        raise PartitionError("a grid node is not covered by any bump")
    return part


def central_gradient(u: np.ndarray, spacing) -> np.ndarray:
    """Central differences with zero extension outside the array; shape ``(ndim, *u.shape)``."""
    pad = np.pad(u, 1)
    grads = []
    for d, h in enumerate(spacing):
        fwd = [slice(1, -1)] * u.ndim
        bwd = [slice(1, -1)] * u.ndim
        fwd[d] = slice(2, None)
        bwd[d] = slice(0, -2)
        grads.append((pad[tuple(fwd)] - pad[tuple(bwd)]) / (2.0 * h))
    return np.stack(grads)


@dataclass
class PartitionReport:
    max_sum_error: float
    sum_ok: bool
    overlap: int
    gradient_constant: float
    support_ok: bool

    def to_dict(self) -> dict:
        return {
            "max_sum_error": self.max_sum_error,
            "sum_ok": self.sum_ok,
            "overlap": self.overlap,
            "gradient_constant": self.gradient_constant,
            "gradient_finite": math.isfinite(self.gradient_constant),
            "support_ok": self.support_ok,
        }


def verify_partition(part: PartitionOfUnity, pot: Potential, eps: float | None = None) -> PartitionReport:
    eps = part.eps if eps is None else eps
    grid = part.grid
    interior = grid.interior_mask()
    S = part.sum_of_squares()
    err = float(np.max(np.abs(S[interior] - 1.0))) if interior.any() else 0.0
    overlap = int(np.max(part.overlap_counts()))
    f = pot.f_many(grid.points()).reshape(grid.shape)
    scale = math.sqrt(eps) * f
    support_ok = True
    gconst = 0.0
    for mu in range(len(part)):
        blk = part.blocks[mu]
        ph = part.phi[mu]
        P = _block_points(grid, blk)
        outside = np.linalg.norm(P - part.centers[mu], axis=-1) >= part.radii[mu]
        support_ok &= bool(np.all(ph[outside] == 0.0))
        # zero padding stands in for the nodes just outside the block
        g = central_gradient(ph, grid.spacing)
        gn = np.sqrt(np.sum(g * g, axis=0))
        mask = interior[blk]
        if mask.any():
            gconst = max(gconst, float(np.max(gn[mask] / scale[blk][mask])))
    return PartitionReport(err, err <= 1e-10, overlap, gconst, support_ok)


def comparability_ratio(part: PartitionOfUnity, pot: Potential) -> float:
    """Max of ``f(x)/f(y)`` over node pairs sharing the support of one ``phi_mu``."""
    worst = 1.0
    f = pot.f_many(part.grid.points()).reshape(part.grid.shape)
    for blk, ph in zip(part.blocks, part.phi):
        vals = f[blk][ph > 0]
        if vals.size:
            worst = max(worst, float(vals.max() / vals.min()))
    return worst
