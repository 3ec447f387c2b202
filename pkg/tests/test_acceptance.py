"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they are
produced; they are also repeated in the terminal summary. Running this file as
a script executes the same checks without pytest.
"""

import itertools
import math
import time

import numpy as np
import pytest

from wittenlab.cli import run
from wittenlab.criterion import DIVERGENT
from wittenlab.limitpoly import (
    CERTIFIED,
    CONVERGED,
    DIVERGENT as LIMIT_DIVERGENT,
    VIOLATED,
    ScalingSequence,
    box_samples,
    coefficient_field,
    hessian_frames,
    limit_polynomial,
    no_local_min_certificate,
)
from wittenlab.localization import BoxGrid, bump, build_partition, partition_from_centers, verify_partition
from wittenlab.poly import Polynomial
from wittenlab.potential import Potential, vdelta
from wittenlab.spectral import (
    assemble_witten,
    box_stability_probe,
    dense_eigenvalues,
    ims_identity_check,
    lanczos_smallest,
    m_tau,
    make_grid,
    maximal_estimate_probe,
)

RESULTS: list[str] = []


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    RESULTS.append(line)
    print(line)


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def check_criterion(name: str):
    with Timer() as t:
        report, code = run(["check-criterion", "--potential", name])
    return report["result"], code, t.elapsed


def test_01_first_family_verdicts():
    lines = []
    ok = True
    for d in ("1", "-1", "0.5", "-0.5"):
        res, code, el = check_criterion(f"vdelta:{d}")
        good = code == 0 and res["verdict"] == "criterion_holds_on_samples" and el < 30
        ok &= good
        lines.append(f"d={d} {'holds' if code == 0 else 'fails'} ({el:.1f}s)")
    res, code, el = check_criterion("vdelta:0")
    cond_i = res["reports"][0]
    on_axis = "ray (+1, +0)" in cond_i["parameters"]["diverging_paths"] and any(
        w["x"][1] == 0.0 and w["x"][0] > 0 for w in cond_i["witnesses"]
    )
    good = code == 2 and cond_i["verdict"] == DIVERGENT and on_axis and el < 30
    ok &= good
    lines.append(f"d=0 {cond_i['verdict']} along x1-axis={on_axis} ({el:.1f}s)")
    record(1, "vdelta verdicts", ok, "; ".join(lines))
    assert ok


def test_02_second_family_verdicts():
    lines = []
    ok = True
    for d in ("1", "-0.5", "2"):
        res, code, el = check_criterion(f"phidelta:{d}")
        good = code == 0 and el < 30
        ok &= good
        lines.append(f"d={d} {'holds' if code == 0 else 'fails'} ({el:.1f}s)")
    res, code, el = check_criterion("phidelta:-1")
    cond_i = res["reports"][0]
    wit = cond_i["witnesses"]
    shape = bool(wit) and all(w["x"][0] == 0.0 and w["x"][1] < 0 for w in wit)
    good = code == 2 and cond_i["verdict"] == DIVERGENT and shape and el < 30
    ok &= good
    lines.append(f"d=-1 {cond_i['verdict']}, {len(wit)} witnesses all (0, x2<0)={shape} ({el:.1f}s)")
    record(2, "phidelta verdicts", ok, "; ".join(lines))
    assert ok


def random_operator(rng):
    n = int(rng.integers(1, 3))
    xs = Polynomial.variables(n)
    V = Polynomial.zero(n)
    for x in xs:
        V = V + float(rng.uniform(0.1, 1.0)) * x**2 + float(rng.uniform(0, 0.2)) * x**4
    if n == 2:
        V = V + float(rng.uniform(-0.3, 0.3)) * xs[0] * xs[1]
        res = (int(rng.integers(12, 33)), int(rng.integers(12, 33)))
    else:
        res = int(rng.integers(40, 1027))
    L = float(rng.uniform(2, 6))
    grid = make_grid([(-L, L)] * n, res)
    return assemble_witten(Potential(V, k=2), float(rng.uniform(0.5, 3)), grid)


def test_03_lanczos_matches_dense():
    rng = np.random.default_rng(2024)
    worst = 0.0
    dims = []
    with Timer() as t:
        for i in range(20):
            A = random_operator(rng)
            dims.append(A.dimension)
            res = lanczos_smallest(A, 5, tol=1e-8, seed=i)
            ref = dense_eigenvalues(A)[:5]
            worst = max(worst, float(np.max(np.abs(res.eigenvalues - ref))))
    ok = worst <= 1e-8 and max(dims) <= 1024 and t.elapsed < 120
    record(3, "Lanczos vs dense", ok, f"max error {worst:.2e} over 20 operators (dim {min(dims)}..{max(dims)}), {t.elapsed:.1f}s")
    assert ok


def harmonic():
    (x,) = Polynomial.variables(1)
    return Potential(0.5 * x**2, k=2)


def harmonic_lowest(h):
    grid = make_grid([(-8, 8)], int(round(16 / h)) + 1)
    A = assemble_witten(harmonic(), 1.0, grid)
    res = lanczos_smallest(A, 3, tol=1e-10, sigma=-2.0)
    assert res.all_converged
    return res.eigenvalues


def test_04_harmonic_benchmark():
    with Timer() as t:
        coarse = harmonic_lowest(0.05)
        fine = harmonic_lowest(0.025)
    exact = np.array([0.0, 2.0, 4.0])
    err_c = np.abs(coarse - exact)
    err_f = np.abs(fine - exact)
    ratios = err_c / err_f
    ok = bool(np.all(err_c <= 1e-2)) and bool(np.all((3.5 <= ratios) & (ratios <= 4.5))) and t.elapsed < 60
    record(4, "harmonic benchmark", ok,
           f"h=0.05 errors {[f'{e:.2e}' for e in err_c]}, halving ratios {[round(float(r), 3) for r in ratios]}, {t.elapsed:.1f}s")
    assert ok


def test_05_compactness_probe():
    boxes = [4, 6, 8, 10]
    lam = 20.0
    with Timer() as t:
        one = box_stability_probe(vdelta(1.0), 1.0, lam, boxes, 0.1)
        zero = box_stability_probe(vdelta(0.0), 1.0, lam, boxes, 0.1)
    ok = (
        one.verdict == "stabilizes"
        and min(one.counts) >= 8
        and zero.verdict == "grows"
        and t.elapsed < 600
    )
    record(5, "compactness probe", ok,
           f"Lambda={lam:g}, h=0.1: vdelta:1 counts {one.counts} -> {one.verdict}; "
           f"vdelta:0 counts {zero.counts} -> {zero.verdict}; {t.elapsed:.1f}s")
    assert ok


def test_06_partition_invariants():
    pot = harmonic()
    with Timer() as t:
        part = build_partition(pot, [(-4, 4)], 0.25, 0.5, 801)
        rep = verify_partition(part, pot)
    ok = (
        rep.max_sum_error <= 1e-10
        and rep.support_ok
        and rep.overlap <= 3
        and math.isfinite(rep.gradient_constant)
        and t.elapsed < 60
    )
    record(6, "partition invariants", ok,
           f"{len(part)} balls, max|sum phi^2-1| {rep.max_sum_error:.1e}, overlap {rep.overlap}, "
           f"support ok {rep.support_ok}, gradient constant {rep.gradient_constant:.3g}, {t.elapsed:.2f}s")
    assert ok


def test_07_ims_identity():
    zero = Potential(Polynomial.zero(1), k=2)
    with Timer() as t:
        grid = BoxGrid.make([(0, 0.1)], 41)
        u = bump((grid.axes[0] - 0.05) / 0.04)
        single = partition_from_centers(zero, grid, 0.25, 0.9, [[0.05]], radii=[5.0])
        trivial = ims_identity_check(zero, 1.0, single, u)["residual"]
        residuals = []
        for res in (201, 401, 801):
            grid = BoxGrid.make([(-2, 2)], res)
            part = partition_from_centers(zero, grid, 0.25, 0.9, [[-0.15], [0.15]])
            residuals.append(ims_identity_check(zero, 1.0, part, bump(grid.axes[0] / 0.4))["residual"])
    ratios = [a / b for a, b in zip(residuals, residuals[1:])]
    ok = trivial <= 1e-12 and all(3 <= r <= 5 for r in ratios) and t.elapsed < 120
    record(7, "IMS identity", ok,
           f"single bump residual {trivial:.1e}; two bumps residuals {[f'{r:.2e}' for r in residuals]}, "
           f"ratios {[round(r, 3) for r in ratios]}, {t.elapsed:.2f}s")
    assert ok


def random_quadratic(rng, n=3):
    xs = Polynomial.variables(n)
    q = Polynomial.zero(n)
    A = rng.normal(size=(n, n))
    b = rng.normal(size=n)
    for i in range(n):
        q = q + float(b[i]) * xs[i]
        for j in range(n):
            q = q + float(A[i, j]) * xs[i] * xs[j]
    return q


def test_08_certificate_mechanism():
    x1, x2 = Polynomial.variables(2)
    with Timer() as t:
        X = box_samples([(-2, 2), (-2, 2)], 41)
        saddle = no_local_min_certificate(x1**2 - x2**2, 1.0, X)
        bowl = no_local_min_certificate(x1**2 + x2**2, 1.0, X)
        rng = np.random.default_rng(8)
        worst = np.inf
        for _ in range(10):
            q = random_quadratic(rng)
            S = rng.uniform(-5, 5, size=(1000, 3))
            fr = hessian_frames(q, S)
            a = coefficient_field(fr["lambdas"], fr["Q"], float(rng.uniform(1, 10)))
            worst = min(worst, float(np.min(np.linalg.eigvalsh(a))))
    at_origin = [0.0, 0.0] in bowl.violation_points
    ok = saddle.status == CERTIFIED and bowl.status == VIOLATED and at_origin and worst >= 1 - 1e-9 and t.elapsed < 30
    record(8, "no-local-min certificate", ok,
           f"saddle {saddle.status}; bowl {bowl.status} at origin={at_origin}; "
           f"min eig(a) over 10x1000 samples {worst:.12f}, {t.elapsed:.2f}s")
    assert ok


def test_09_limit_polynomials():
    (x,) = Polynomial.variables(1)
    J = (4, 8, 16, 32, 64)
    with Timer() as t:
        good = limit_polynomial(x**2, ScalingSequence((1.0,), 1, 2, 1), J)
        bad = limit_polynomial(x**2, ScalingSequence((1.0,), 1, 3, 1), J)
    last = good.members[-1]
    err = max(abs(last.coeff((2,)) - 1), abs(last.coeff((1,)) - 2), abs(last.coeff((0,))))
    ok = good.status == CONVERGED and good.q == x**2 + 2 * x and err <= 1e-9 and bad.status == LIMIT_DIVERGENT and t.elapsed < 10
    record(9, "limit polynomials", ok,
           f"q = {good.q} (coefficient error at j=64: {err:.1e}); tau=j^3 -> {bad.status}, {t.elapsed:.3f}s")
    assert ok


def test_10_m_tau_bracketing():
    rng = np.random.default_rng(10)
    eps = 4 * np.finfo(float).eps
    bad = 0
    with Timer() as t:
        for _ in range(10_000):
            tau0 = float(10 ** rng.uniform(-3, 3))
            tau = tau0 * float(rng.uniform(1e-6, 1.0 - 1e-12))
            C = 1.0 + float(10 ** rng.uniform(-6, 3)) * float(rng.integers(0, 2))
            if not 0 < tau < tau0:
                continue
            b = (m_tau(tau, tau0, C) * tau / tau0) ** 2
            bad += not (1 - 1 / (2 * C) - eps <= b <= 1 + eps)
    ok = bad == 0 and t.elapsed < 1
    record(10, "m_tau bracketing", ok, f"{bad} violations in 10^4 draws, {t.elapsed:.3f}s")
    assert ok


def test_11_maximal_estimate():
    pot = vdelta(1.0)
    grid = make_grid([(-4, 4), (-4, 4)], 161)
    centers = [list(c) for c in itertools.product(np.linspace(-3, 3, 7), repeat=2)]
    lines = []
    ok = True
    with Timer() as t:
        for tau in (1.0, 2.0, 4.0):
            out = maximal_estimate_probe(pot, tau, centers, 0.5, grid)
            r = np.array(out["ratios"])
            spread = float(r.max() / r.min())
            ok &= bool(np.all(np.isfinite(r))) and spread <= 50
            lines.append(f"tau={tau:g} max {r.max():.3g} max/min {spread:.2f}")
    ok &= t.elapsed < 300
    record(11, "maximal estimate", ok, "; ".join(lines) + f", {t.elapsed:.2f}s")
    assert ok


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn()
            except AssertionError:
                pass
