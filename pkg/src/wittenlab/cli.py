"""Command-line front end.

Every subcommand builds a report ``{"tool", "version", "config", "result",
"verdict", "meta"}``. Everything except ``meta`` (wall time) is a pure function
of the command line, so two identical invocations give identical bodies.
"""

from __future__ import annotations

import argparse
import itertools
import json
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .criterion import SamplingPlan, default_plan, full_check
from .limitpoly import (
    box_samples,
    limit_polynomial,
    no_local_min_certificate,
    parse_sequence,
)
from .localization import BoxGrid, bump, build_partition, verify_partition, partition_from_centers
from .poly import Polynomial
from .potential import Potential, phidelta, vdelta
from .spectral import (
    assemble_witten,
    box_stability_probe,
    ims_identity_check,
    lanczos_smallest,
    make_grid,
    m_tau,
    maximal_estimate_probe,
    spectral_floor,
    spectral_shift,
    worker_count,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAILS = 2

_REGISTERED = re.compile(r"^(vdelta|phidelta):(.+)$")


class CliError(Exception):
    pass


def expand_registered_potential(name: str, k: int | None = None) -> Potential:
    m = _REGISTERED.match(name.strip())
    if not m:
        raise ValueError(f"unknown registered potential {name!r}")
    try:
        delta = float(m.group(2))
    except ValueError:
        raise ValueError(f"bad parameter in {name!r}") from None
    if not np.isfinite(delta):
        raise ValueError(f"bad parameter in {name!r}")
    pot = vdelta(delta) if m.group(1) == "vdelta" else phidelta(delta)
    if k is not None and k != pot.k:
        pot = Potential(pot.V, k=k, name=pot.name)
    return pot


def load_potential(spec: str, k: int | None = None) -> Potential:
    """A registered name or a path to polynomial JSON (optionally with a top-level ``k``)."""
    if _REGISTERED.match(spec.strip()):
        return expand_registered_potential(spec, k)
    path = Path(spec)
    if not path.is_file():
        raise ValueError(f"{spec!r} is neither a registered potential nor a file")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed JSON in {spec}: {exc}") from None
    if not isinstance(data, dict):
        raise ValueError("potential JSON must be an object")
    V = Polynomial.from_dict(data)
    if k is None:
        k = int(data.get("k", max(2, V.degree)))
    return Potential(V, k=k, name=path.stem)


# parsing helpers


def parse_floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def parse_box(text: str) -> list[tuple[float, float]]:
    """``"-4:4,-4:4"`` -> ``[(-4, 4), (-4, 4)]``."""
    box = []
    for part in text.split(","):
        lo, hi = (float(t) for t in part.split(":"))
        if not hi > lo:
            raise ValueError(f"empty interval {part!r}")
        box.append((lo, hi))
    return box


def parse_points(text: str) -> list[list[float]]:
    """``"x,y;x,y"`` or a grid ``"lo:hi:count"`` repeated per axis with ``x``."""
    if "x" in text:
        axes = []
        for part in text.split("x"):
            lo, hi, cnt = part.split(":")
            axes.append(np.linspace(float(lo), float(hi), int(cnt)))
        return [list(map(float, c)) for c in itertools.product(*axes)]
    return [parse_floats(p) for p in text.split(";") if p.strip()]


def child_seeds(seed: int, count: int) -> list[int]:
    """Independent per-module seeds split from the run seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1)[0]) for c in children]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True)


# subcommands; each returns (result, verdict lines, exit code)


def cmd_check_criterion(args, seeds):
    pot = load_potential(args.potential, args.k)
    if args.plan:
        plan = SamplingPlan.from_dict(json.loads(Path(args.plan).read_text()))
    else:
        plan = default_plan(pot.dimension, seed=seeds[0])
    rep = full_check(pot, args.delta1, args.delta2, plan)
    result = {"potential": pot.V.to_dict(), "k": pot.k, "plan": plan.to_dict(), **rep.to_dict()}
    lines = [f"{r.condition}: {r.verdict}" for r in rep.reports] + [f"verdict: {rep.verdict}"]
    if args.out:
        Path(args.out).write_text(dumps(result) + "\n")
    return result, lines, EXIT_OK if rep.holds else EXIT_FAILS


def cmd_limit_poly(args, seeds):
    pot = load_potential(args.potential, args.k)
    v = parse_floats(args.v) if args.v else None
    seq = parse_sequence(args.seq, v, args.a, args.b, args.c)
    lim = limit_polynomial(pot.V, seq, parse_floats(args.j), tol=args.tol)
    result = {"sequence": seq.to_dict(), "limit": lim.to_dict(), "certificate": None}
    lines = [f"limit: {lim.status}"]
    if lim.converged:
        box = parse_box(args.cert_box) if args.cert_box else [(-2.0, 2.0)] * pot.dimension
        X = box_samples(box, args.cert_res)
        cert = no_local_min_certificate(lim.q, args.c_tilde, X)
        result["certificate"] = cert.to_dict()
        lines.append(f"q = {lim.q}")
        lines.append(f"certificate: {cert.status}")
    if args.out:
        Path(args.out).write_text(dumps(result) + "\n")
    return result, lines, EXIT_OK


def cmd_partition(args, seeds):
    pot = load_potential(args.potential, args.k)
    part = build_partition(pot, parse_box(args.box), args.eps, args.r, args.res)
    rep = verify_partition(part, pot)
    result = {"centers": len(part), "report": rep.to_dict()}
    if args.out:
        out = Path(args.out)
        csv = out.with_suffix(".csv")
        part.write(out, csv)
        result["files"] = [str(out), str(csv)]
    lines = [
        f"centers: {len(part)}",
        f"max |sum phi^2 - 1|: {rep.max_sum_error:.3e}",
        f"overlap: {rep.overlap}",
        f"support contained: {rep.support_ok}",
    ]
    return result, lines, EXIT_OK


def cmd_spectrum(args, seeds):
    pot = load_potential(args.potential, args.k)
    grid = make_grid(parse_box(args.box), args.res)
    A = assemble_witten(pot, args.tau, grid)
    sigma = None if args.plain else spectral_shift(A)
    res = lanczos_smallest(A, args.count, tol=args.tol, max_iter=args.max_iter, seed=seeds[0], sigma=sigma)
    floor = spectral_floor(pot, args.tau, grid)
    result = {
        "dimension": A.dimension,
        "rows": [
            {"index": i, "eigenvalue": l, "residual": r, "converged": c} for i, l, r, c in res.rows()
        ],
        "iterations": res.iterations,
        "lower_bound": floor,
        "above_lower_bound": bool(res.eigenvalues[0] >= floor - 1e-6),
    }
    if args.out:
        Path(args.out).write_text(res.to_csv())
    lines = [f"{i} {l:.10g} res={r:.2e} {'ok' if c else 'UNCONVERGED'}" for i, l, r, c in res.rows()]
    return result, lines, EXIT_OK


def cmd_probe(args, seeds):
    pot = load_potential(args.potential, args.k)
    probe = box_stability_probe(
        pot, args.tau, args.lam, parse_floats(args.boxes), args.h, tol=args.tol, seed=seeds[0]
    )
    result = probe.to_dict()
    lines = [f"N({args.lam:g}) per box: {probe.counts}", f"verdict: {probe.verdict}"]
    if args.out:
        Path(args.out).write_text(dumps(result) + "\n")
    return result, lines, EXIT_OK


def cmd_ims(args, seeds):
    pot = load_potential(args.potential, args.k)
    box = parse_box(args.box)
    if args.centers:
        grid = BoxGrid.make(box, args.res)
        part = partition_from_centers(pot, grid, args.eps, args.r, parse_points(args.centers))
    else:
        part = build_partition(pot, box, args.eps, args.r, args.res)
    center = np.array(parse_floats(args.u_center)) if args.u_center else np.zeros(pot.dimension)
    s = np.linalg.norm(part.grid.points() - center, axis=-1) / args.u_radius
    u = bump(s).reshape(part.grid.shape)
    out = ims_identity_check(pot, args.tau, part, u)
    result = {"centers": len(part), **out}
    lines = [f"residual: {out['residual']:.3e}"]
    if args.out:
        Path(args.out).write_text(dumps(result) + "\n")
    return result, lines, EXIT_OK


def cmd_maximal(args, seeds):
    pot = load_potential(args.potential, args.k)
    grid = make_grid(parse_box(args.box), args.res)
    centers = parse_points(args.centers)
    taus = parse_floats(args.tau)

    def job(tau):
        return maximal_estimate_probe(pot, tau, centers, args.rho, grid)

    with ThreadPoolExecutor(max_workers=worker_count()) as ex:
        per_tau = list(ex.map(job, taus))
    result = {"rho": args.rho, "probes": per_tau}
    lines = [
        f"tau={p['tau']:g}: max ratio {p['max_ratio']:.4g}, max/min {p['max_ratio'] / p['min_ratio']:.3g}"
        if p["min_ratio"] > 0
        else f"tau={p['tau']:g}: max ratio {p['max_ratio']:.4g}"
        for p in per_tau
    ]
    if args.out:
        Path(args.out).write_text(dumps(result) + "\n")
    return result, lines, EXIT_OK


def cmd_mtau(args, seeds):
    m = m_tau(args.tau, args.tau0, args.C)
    b = (m * args.tau / args.tau0) ** 2
    result = {"m": m, "bracket": b, "lower": 1 - 1 / (2 * args.C)}
    return result, [f"m = {m!r}", f"(m tau/tau0)^2 = {b!r}"], EXIT_OK


# parser


def _globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(42), help="run seed (default 42)")
    p.add_argument("--out", default=d(None), help="output file")
    p.add_argument("--json", action="store_true", default=d(False), help="print the full report as JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wittenlab", description=__doc__.splitlines()[0])
    _globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        _globals(p, suppress=True)
        p.add_argument("--potential", required=name != "mtau", help="vdelta:<d>, phidelta:<d> or a JSON file")
        p.add_argument("--k", type=int, default=None)
        p.set_defaults(func=func)
        return p

    p = add("check-criterion", cmd_check_criterion, "sample the growth conditions on a potential")
    p.add_argument("--delta1", type=float, default=0.1)
    p.add_argument("--delta2", type=float, default=0.1)
    p.add_argument("--plan", default=None, help="sampling plan JSON")

    p = add("limit-poly", cmd_limit_poly, "limit polynomial along a scaling sequence")
    p.add_argument("--seq", required=True)
    p.add_argument("--v", default=None)
    p.add_argument("--a", type=float, default=None)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--c", type=float, default=None)
    p.add_argument("--j", default="4,8,16,32,64")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--c-tilde", type=float, default=1.0)
    p.add_argument("--cert-box", default=None)
    p.add_argument("--cert-res", type=int, default=41)

    p = add("partition", cmd_partition, "quadratic partition of unity for the slow metric")
    p.add_argument("--box", required=True)
    p.add_argument("--eps", type=float, default=0.25)
    p.add_argument("--r", type=float, default=0.3)
    p.add_argument("--res", type=int, default=257)

    p = add("spectrum", cmd_spectrum, "lowest eigenvalues of the discretized operator")
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--box", required=True)
    p.add_argument("--res", type=int, default=129)
    p.add_argument("--count", type=int, default=12)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--plain", action="store_true", help="no shift-invert")

    p = add("probe-compactness", cmd_probe, "eigenvalue counts on growing boxes")
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--boxes", default="4,6,8,10")
    p.add_argument("--h", type=float, default=0.1)
    p.add_argument("--tol", type=float, default=1e-6)

    p = add("ims-check", cmd_ims, "localization identity residual")
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--box", required=True)
    p.add_argument("--res", type=int, default=401)
    p.add_argument("--eps", type=float, default=0.25)
    p.add_argument("--r", type=float, default=0.9)
    p.add_argument("--centers", default=None, help="explicit centres 'x,y;x,y'")
    p.add_argument("--u-center", default=None)
    p.add_argument("--u-radius", type=float, default=0.4)

    p = add("maximal-estimate", cmd_maximal, "empirical constant of the weighted estimate")
    p.add_argument("--tau", default="1", help="comma separated list")
    p.add_argument("--box", required=True)
    p.add_argument("--res", type=int, default=161)
    p.add_argument("--centers", required=True, help="'x,y;x,y' or 'lo:hi:n x lo:hi:n'")
    p.add_argument("--rho", type=float, default=0.5)

    p = add("mtau", cmd_mtau, "the rescaling factor m_tau")
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--tau0", type=float, required=True)
    p.add_argument("--C", type=float, required=True)
    return parser


def config_of(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def config_to_argv(config: dict) -> list[str]:
    """Command line that parses back to ``config``."""
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices[config["command"]]
    dests = {a.dest: a for a in sub._actions if a.option_strings}
    argv = [config["command"]]
    for key, val in config.items():
        if key == "command" or val is None:
            continue
        act = dests[key]
        flag = act.option_strings[0]
        if isinstance(act, argparse._StoreTrueAction):
            if val:
                argv.append(flag)
        else:
            argv.append(f"{flag}={val}")
    return argv


def run(argv: list[str] | None = None) -> tuple[dict | None, int]:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    seeds = child_seeds(args.seed, 4)
    try:
        result, lines, code = args.func(args, seeds)
    except Exception as exc:  # every module error becomes exit 1
        print(f"error: {exc}", file=sys.stderr)
        return None, EXIT_ERROR
    report = {
        "tool": "wittenlab",
        "version": __version__,
        "config": config_of(args),
        "result": result,
        "verdict": lines,
        "meta": {"wall_time_s": time.perf_counter() - started},
    }
    if args.json:
        print(dumps(report))
    else:
        print("\n".join(lines))
    return report, code


def report_body(report: dict) -> str:
    """Serialized report without the timing section."""
    return dumps({k: v for k, v in report.items() if k != "meta"})


def main(argv: list[str] | None = None) -> int:
    _, code = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
