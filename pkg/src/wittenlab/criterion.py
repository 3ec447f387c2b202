"""Sample-based checks of the three structural conditions on a potential.

Condition (i) bounds the positive Hessian eigenvalue mass by the negative
mass, the squared gradient and lower powers of the derivatives. Condition
(ii) bounds the order ``k+1`` derivatives by ``(1 + ftilde)^(k+1-delta2)``.
Condition (iii) asks ``ftilde -> infinity`` at infinity.

A universally quantified statement cannot be certified by sampling, so every
verdict is "on samples". Unboundedness is detected along paths that go to
infinity (rays plus known critical loci of the example families): a ratio
sequence that grows by ``DIVERGENCE_FACTOR`` across the radius schedule with a
nondecreasing tail of length ``TAIL_LENGTH`` is reported as divergent.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .potential import Potential, match_family

DIVERGENCE_FACTOR = 10.0
TAIL_LENGTH = 5
MAX_WITNESSES = 8

SATISFIED = "satisfied_on_samples"
DIVERGENT = "divergence_detected"
VIOLATED = "violated"

HOLDS = "criterion_holds_on_samples"
FAILS = "criterion_fails_on_samples"

MODES = ("grid", "rays", "random")


def default_radii() -> tuple[float, ...]:
    # half-decade steps from 10 to 1e30; the ratio in (i) can grow like R^(delta1/2)
    return tuple(10.0 ** (0.5 * i) for i in range(2, 61))


def default_sphere_radii() -> tuple[float, ...]:
    return tuple(2.0**i for i in range(0, 21))


@dataclass(frozen=True)
class SamplingPlan:
    """Where to sample ``R^n``.

    ``modes`` selects any subset of grid, rays and random sampling. Rays are
    walked along ``radii``; spheres for condition (iii) use ``sphere_radii``.
    """

    box: tuple[tuple[float, float], ...] = ((-10.0, 10.0), (-10.0, 10.0))
    grid_points: int = 101
    random_count: int = 2000
    directions: tuple[tuple[float, ...], ...] | None = None
    radii: tuple[float, ...] = field(default_factory=default_radii)
    sphere_radii: tuple[float, ...] = field(default_factory=default_sphere_radii)
    sphere_count: int = 720
    modes: tuple[str, ...] = MODES
    seed: int = 42

    def __post_init__(self):
        bad = set(self.modes) - set(MODES)
        if bad or not self.modes:
            raise ValueError(f"unknown sampling modes {sorted(bad)}")
        for sched in (self.radii, self.sphere_radii):
            if len(sched) < 1 or np.any(np.diff(sched) <= 0):
                raise ValueError("radii schedule must be strictly increasing and non-empty")
            if sched[0] <= 0:
                raise ValueError("radii must be positive")
        if self.grid_points < 1 or self.random_count < 0 or self.sphere_count < 1:
            raise ValueError("sample counts must be positive")
        for lo, hi in self.box:
            if not hi > lo:
                raise ValueError("box intervals must have hi > lo")
        if self.count < 1:
            raise ValueError("sampling plan is empty")

    @property
    def dimension(self) -> int:
        return len(self.box)

    @property
    def count(self) -> int:
        c = 0
        if "grid" in self.modes:
            c += self.grid_points ** len(self.box)
        if "random" in self.modes:
            c += self.random_count
        if "rays" in self.modes:
            c += len(self.radii)
        return c

    def to_dict(self) -> dict:
        return {
            "box": [list(b) for b in self.box],
            "grid_points": self.grid_points,
            "random_count": self.random_count,
            "directions": None if self.directions is None else [list(d) for d in self.directions],
            "radii": list(self.radii),
            "sphere_radii": list(self.sphere_radii),
            "sphere_count": self.sphere_count,
            "modes": list(self.modes),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SamplingPlan":
        kw = dict(d)
        if "box" in kw:
            kw["box"] = tuple(tuple(map(float, b)) for b in kw["box"])
        if kw.get("directions") is not None:
            kw["directions"] = tuple(tuple(map(float, v)) for v in kw["directions"])
        for key in ("radii", "sphere_radii"):
            if key in kw:
                kw[key] = tuple(map(float, kw[key]))
        if "modes" in kw:
            kw["modes"] = tuple(kw["modes"])
        return cls(**kw)


def default_plan(n: int, seed: int = 42, half_width: float = 10.0) -> SamplingPlan:
    per_dim = {1: 2001, 2: 101, 3: 31}.get(n, 7)
    return SamplingPlan(
        box=tuple((-half_width, half_width) for _ in range(n)),
        grid_points=per_dim,
        seed=seed,
    )


# sample generation


def grid_samples(plan: SamplingPlan) -> np.ndarray:
    axes = [np.linspace(lo, hi, plan.grid_points) for lo, hi in plan.box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def random_samples(plan: SamplingPlan) -> np.ndarray:
    rng = np.random.default_rng(plan.seed)
    lo = np.array([b[0] for b in plan.box])
    hi = np.array([b[1] for b in plan.box])
    return lo + (hi - lo) * rng.random((plan.random_count, plan.dimension))


def default_directions(n: int) -> list[tuple[float, ...]]:
    dirs: list[tuple[float, ...]] = []
    for i in range(n):
        for s in (1.0, -1.0):
            e = [0.0] * n
            e[i] = s
            dirs.append(tuple(e))
    if n > 1:
        for signs in itertools.product((1.0, -1.0), repeat=n):
            dirs.append(tuple(s / math.sqrt(n) for s in signs))
    return dirs


Path = tuple[str, Callable[[float], np.ndarray]]


def family_paths(pot: Potential) -> list[Path]:
    """Curves through the critical regions of the registered example families."""
    fam = match_family(pot.V)
    if fam is None:
        return []
    name, delta = fam
    paths: list[Path] = []
    if name == "vdelta" and delta < 0:
        c = math.sqrt(-delta)
        for a, b in itertools.product((c, -c), (1.0, -1.0)):
            paths.append((f"locus x1={a:+g}, x2={b:+g}R", lambda R, a=a, b=b: np.array([a, b * R])))
            paths.append((f"locus x2={a:+g}, x1={b:+g}R", lambda R, a=a, b=b: np.array([b * R, a])))
    elif name == "phidelta":
        for s in (1.0, -1.0):
            paths.append(
                (f"parabola x2=x1^2, x1={s:+g}sqrt(R)", lambda R, s=s: np.array([s * math.sqrt(R), R]))
            )
    return paths


def sample_paths(pot: Potential, plan: SamplingPlan) -> list[Path]:
    dirs = plan.directions if plan.directions is not None else default_directions(pot.dimension)
    paths: list[Path] = []
    for d in dirs:
        v = np.asarray(d, dtype=float)
        if v.shape != (pot.dimension,) or not np.any(v):
            raise ValueError(f"bad ray direction {d}")
        v = v / np.linalg.norm(v)
        label = "ray (" + ", ".join(f"{c:+.4g}" for c in v) + ")"
        paths.append((label, lambda R, v=v: R * v))
    if plan.directions is None:
        paths.extend(family_paths(pot))
    return paths


def detect_divergence(values, factor: float = DIVERGENCE_FACTOR, tail: int = TAIL_LENGTH) -> bool:
    """True if ``values`` grow by ``factor`` over the schedule with a monotone tail."""
    v = np.asarray(values, dtype=float)
    if v.size < tail:
        return False
    pos = np.flatnonzero(v > 0)
    if pos.size == 0:
        return False
    first = v[pos[0]]
    if not v[-1] >= factor * first:
        return False
    return bool(np.all(np.diff(v[-tail:]) >= 0))


# reports


@dataclass
class Witness:
    x: list[float]
    lhs: float
    rhs: float
    ratio: float
    source: str = "sample"

    def to_dict(self) -> dict:
        return {"x": self.x, "lhs": self.lhs, "rhs": self.rhs, "ratio": self.ratio, "source": self.source}


@dataclass
class CriterionReport:
    condition: str
    verdict: str
    passed: bool
    best_constant: float | None
    witnesses: list[Witness]
    trend: dict[str, list[float]]
    parameters: dict

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "verdict": self.verdict,
            "passed": self.passed,
            "best_constant": self.best_constant,
            "witnesses": [w.to_dict() for w in self.witnesses],
            "trend": self.trend,
            "parameters": self.parameters,
        }


def _finite(v: np.ndarray) -> np.ndarray:
    return np.where(np.isfinite(v), v, np.inf)


def condition_i_terms(pot: Potential, X, delta1: float) -> dict[str, np.ndarray]:
    """LHS, RHS and Laplacian of the eigenvalue-mass inequality at each point."""
    r = pot.analyze_many(X)
    X = r["x"]
    rhs = r["m_neg"] + np.sum(r["grad"] ** 2, axis=-1) + 1.0
    for a, p in pot.derivatives.items():
        m = sum(a)
        if m >= 2:
            rhs = rhs + np.abs(p.eval_many(X)) ** ((2.0 - delta1) / m)
    lhs = r["pos_sum"]
    return {"lhs": lhs, "rhs": _finite(rhs), "laplacian": np.trace(r["hess"], axis1=-2, axis2=-1)}


def _ratio(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out = lhs / rhs
    return np.where(np.isfinite(rhs), out, 0.0)


def _bulk_samples(plan: SamplingPlan) -> np.ndarray:
    parts = []
    if "grid" in plan.modes:
        parts.append(grid_samples(plan))
    if "random" in plan.modes and plan.random_count:
        parts.append(random_samples(plan))
    if not parts:
        return np.zeros((0, plan.dimension))
    return np.concatenate(parts)


def _top_witnesses(X, lhs, rhs, ratio, mask, source, count=MAX_WITNESSES) -> list[Witness]:
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return []
    order = idx[np.argsort(-ratio[idx], kind="stable")][:count]
    return [
        Witness(X[i].tolist(), float(lhs[i]), float(rhs[i]), float(ratio[i]), source) for i in order
    ]


def _assemble(condition, witnesses, trend, diverging, parameters, use_constant=True) -> CriterionReport:
    witnesses = sorted(witnesses, key=lambda w: -w.ratio)
    best = max((w.ratio for w in witnesses), default=0.0) if use_constant else None
    verdict = DIVERGENT if diverging else SATISFIED
    params = dict(parameters)
    params["diverging_paths"] = diverging
    return CriterionReport(condition, verdict, not diverging, best, witnesses, trend, params)


def _check_ratio_condition(pot, plan, condition, ratio_fn, parameters) -> CriterionReport:
    witnesses: list[Witness] = []
    violations: list[Witness] = []
    X = _bulk_samples(plan)
    if X.shape[0]:
        lhs, rhs, ratio, mask = ratio_fn(X)
        witnesses += _top_witnesses(X, lhs, rhs, ratio, mask, "sample")
    trend: dict[str, list[float]] = {}
    diverging: list[str] = []
    if "rays" in plan.modes:
        radii = np.asarray(plan.radii)
        for label, path in sample_paths(pot, plan):
            P = np.stack([path(R) for R in radii])
            lhs, rhs, ratio, mask = ratio_fn(P)
            ratio = np.where(mask, ratio, 0.0)
            trend[label] = ratio.tolist()
            witnesses += _top_witnesses(P, lhs, rhs, ratio, mask, label, count=1)
            if detect_divergence(ratio):
                diverging.append(label)
                tail = np.flatnonzero(mask)[-3:]
                violations += [
                    Witness(P[i].tolist(), float(lhs[i]), float(rhs[i]), float(ratio[i]), label)
                    for i in tail
                ]
    if violations:
        # a detected divergence is reported through the points that exhibit it
        witnesses = violations
    # drop duplicates (same point reported twice)
    seen = set()
    unique = []
    for w in witnesses:
        key = (tuple(w.x), w.source)
        if key not in seen:
            seen.add(key)
            unique.append(w)
    return _assemble(condition, unique, trend, diverging, parameters)


def check_condition_i(pot: Potential, delta1: float, plan: SamplingPlan) -> CriterionReport:
    """Eigenvalue-mass condition; samples with Laplacian <= 0 hold trivially."""
    if not 0 < delta1 < 1:
        raise ValueError("delta1 must lie in (0, 1)")
    _check_plan(pot, plan)

    def ratio_fn(X):
        t = condition_i_terms(pot, X, delta1)
        ratio = _ratio(t["lhs"], t["rhs"])
        mask = t["laplacian"] > 0
        return t["lhs"], t["rhs"], ratio, mask

    return _check_ratio_condition(pot, plan, "i", ratio_fn, {"delta1": delta1, "k": pot.k})


def condition_ii_terms(pot: Potential, X, delta2: float) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    lhs = np.zeros(X.shape[0])
    for p in pot.top_derivatives.values():
        lhs = np.maximum(lhs, np.abs(p.eval_many(X)))
    with np.errstate(over="ignore"):
        rhs = (1.0 + pot.ftilde_many(X)) ** (pot.k + 1 - delta2)
    return lhs, _finite(rhs)


def check_condition_ii(pot: Potential, delta2: float, plan: SamplingPlan) -> CriterionReport:
    """Growth bound on the derivatives of order ``k + 1``."""
    if not 0 < delta2 < 1:
        raise ValueError("delta2 must lie in (0, 1)")
    _check_plan(pot, plan)
    params = {"delta2": delta2, "k": pot.k}
    if pot.V.degree <= pot.k:
        params["shortcut"] = "degree <= k: all order k+1 derivatives vanish"
        params["diverging_paths"] = []
        return CriterionReport("ii", SATISFIED, True, 0.0, [], {}, params)

    def ratio_fn(X):
        lhs, rhs = condition_ii_terms(pot, X, delta2)
        return lhs, rhs, _ratio(lhs, rhs), np.ones(lhs.shape, dtype=bool)

    return _check_ratio_condition(pot, plan, "ii", ratio_fn, params)


def sphere_directions(n: int, count: int, seed: int) -> np.ndarray:
    """Unit vectors: axes and diagonals first, then a dense angular set."""
    base = np.array(default_directions(n))
    if n == 1:
        return base
    if n == 2:
        t = 2 * np.pi * np.arange(count) / count
        extra = np.stack([np.cos(t), np.sin(t)], axis=-1)
    else:
        rng = np.random.default_rng(seed)
        extra = rng.normal(size=(count, n))
        extra /= np.linalg.norm(extra, axis=-1, keepdims=True)
    return np.concatenate([base, extra])


def check_condition_iii(
    pot: Potential, radii=None, sphere_count: int = 720, seed: int = 42
) -> CriterionReport:
    """``ftilde`` must go to infinity: track its minimum over growing spheres."""
    radii = np.asarray(default_sphere_radii() if radii is None else radii, dtype=float)
    if radii.size < 1 or np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be strictly increasing")
    dirs = sphere_directions(pot.dimension, sphere_count, seed)
    minima, argmins = [], []
    for R in radii:
        vals = pot.ftilde_many(R * dirs)
        i = int(np.argmin(vals))
        minima.append(float(vals[i]))
        argmins.append(i)
    minima_arr = np.asarray(minima)
    grows = minima_arr.size >= 2 and minima_arr[-1] > DIVERGENCE_FACTOR * minima_arr[0] and bool(
        np.all(np.diff(minima_arr[-TAIL_LENGTH:]) >= 0)
    )
    last_dir = dirs[argmins[-1]]
    witnesses = [
        Witness((radii[j] * dirs[argmins[j]]).tolist(), minima[j], float(radii[j]), minima[j], "sphere minimum")
        for j in range(len(radii))
    ][-MAX_WITNESSES:]
    params = {
        "radii": radii.tolist(),
        "sphere_minima": minima,
        "witness_direction": last_dir.tolist(),
        "k": pot.k,
    }
    verdict = DIVERGENT if grows else VIOLATED
    return CriterionReport("iii", verdict, bool(grows), None, witnesses, {"sphere_minima": minima}, params)


@dataclass
class FullReport:
    reports: list[CriterionReport]
    verdict: str

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS

    @property
    def failing(self) -> list[str]:
        return [r.condition for r in self.reports if not r.passed]

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "failing_conditions": self.failing,
            "reports": [r.to_dict() for r in self.reports],
        }


def full_check(
    pot: Potential, delta1: float = 0.1, delta2: float = 0.1, plan: SamplingPlan | None = None
) -> FullReport:
    plan = default_plan(pot.dimension) if plan is None else plan
    reports = [
        check_condition_i(pot, delta1, plan),
        check_condition_ii(pot, delta2, plan),
        check_condition_iii(pot, plan.sphere_radii, plan.sphere_count, plan.seed),
    ]
    verdict = HOLDS if all(r.passed for r in reports) else FAILS
    return FullReport(reports, verdict)


def _check_plan(pot: Potential, plan: SamplingPlan) -> None:
    if plan.dimension != pot.dimension:
        raise ValueError("sampling plan dimension does not match the potential")
    if plan.count < 1:
        raise ValueError("sampling plan is empty")
