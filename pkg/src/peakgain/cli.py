"""Command-line entry point: ``peakgain <command> <system> [options]``.

``<system>`` is a JSON file with keys ``A``, ``B``, ``C`` and ``name``, or the
name of a bundled system (``high_damping``, ``low_damping``, ``stiff``).

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from . import __version__
from .linalg import NumericalError
from .model import LtiSystem, UnstableSystemError, load_system
from .oracle import DEFAULT_DT, default_control_matrix, default_horizon, l1_exact, worst_case, \
    write_trajectory_csv
from .starnorm import GRID_POINTS, MULTIPLIERS, REFINE_ITERATIONS, ellipsoid_boundary, sweep
from .tailsplit import tail_split

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
ORDER_SLACK = 1e-9


class InputError(Exception):
    pass


def bundled_systems() -> list[str]:
    root = resources.files("peakgain") / "systems"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def read_system(spec: str) -> LtiSystem:
    """Load a system from a path or a bundled name, turning every input problem into :class:`InputError`."""
    path = Path(spec)
    if path.exists():
        text, source = path.read_text(), str(path)
    elif spec in bundled_systems():
        text = (resources.files("peakgain") / "systems" / f"{spec}.json").read_text()
        source = f"bundled:{spec}"
    else:
        raise InputError(f"{spec}: no such file or bundled system (bundled: {', '.join(bundled_systems())})")
    try:
        record = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{source}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if not isinstance(record, dict):
        raise InputError(f"{source}: expected a JSON object with keys A, B, C")
    try:
        sys_ = load_system(record)
    except KeyError as exc:
        raise InputError(f"{source}: missing required key {exc.args[0]!r}")
    except UnstableSystemError as exc:
        raise InputError(f"{source}: {exc}")
    except (ValueError, TypeError) as exc:
        raise InputError(f"{source}: invalid field: {exc}")
    if not sys_.name:
        sys_ = LtiSystem(sys_.a, sys_.b, sys_.c, path.stem)
    return sys_


def _print_fields(pairs):
    width = max(len(k) for k, _ in pairs)
    for k, v in pairs:
        print(f"{k:<{width}}  {v}")


def _fmt(x) -> str:
    if x is None:
        return "-"
    return f"{x:.8g}" if isinstance(x, float) else str(x)


def _check_degree(sys_: LtiSystem, degree: int):
    if degree == 2 and sys_.n < 2:
        raise InputError("degree 2 lifts x to x ⊗ x and needs n >= 2; a scalar system has no "
                         "cross terms, so use --degree 1")


def _sweep_options(args) -> dict:
    return {"grid_points": args.grid, "refine_iterations": args.refine, "multiplier": args.multiplier}


def cmd_exact(args) -> int:
    sys_ = read_system(args.system)
    est = l1_exact(sys_, args.tol)
    _print_fields([("system", sys_.name), ("exact", _fmt(est.value)),
                   ("truncation_time", _fmt(est.truncation_time)), ("tail_bound", f"{est.tail_bound:.3g}"),
                   ("quadrature_error", f"{est.quadrature_error:.3g}"),
                   ("sign_changes", len(est.sign_changes))])
    return EXIT_OK


def cmd_star(args) -> int:
    sys_ = read_system(args.system)
    _check_degree(sys_, args.degree)
    res = sweep(sys_, args.degree, **_sweep_options(args))
    _print_fields([("system", sys_.name), ("degree", res.degree), ("multiplier", res.multiplier),
                   ("kappa", _fmt(res.kappa)), ("best_alpha", _fmt(res.best.alpha)),
                   ("star_norm", _fmt(res.star_norm)),
                   ("feasible_points", f"{len(res.feasible_points())}/{len(res.points)}")])
    if args.verbose:
        print()
        print(f"{'alpha':>14}  {'N_alpha':>14}  status")
        for p in res.points:
            print(f"{p.alpha:14.8g}  {_fmt(p.n_alpha):>14}  {p.status}")
    return EXIT_OK


def cmd_worstcase(args) -> int:
    sys_ = read_system(args.system)
    p = default_control_matrix(sys_)
    run = worst_case(sys_, p, dt=args.dt, horizon=args.horizon)
    _print_fields([("system", sys_.name), ("dt", _fmt(run.dt)), ("horizon", _fmt(run.horizon)),
                   ("peak_output", _fmt(run.peak_output)), ("peak_time", _fmt(run.peak_time))])
    if run.peak_near_end:
        print(f"warning: peak at t={run.peak_time:.4g} is in the last tenth of the horizon "
              f"{run.horizon:.4g}; the worst case may not have been reached", file=sys.stderr)
    if args.out:
        write_trajectory_csv(run, args.out)
    return EXIT_OK


def cmd_tailsplit(args) -> int:
    sys_ = read_system(args.system)
    _check_degree(sys_, args.degree)
    if not args.t0 > 0:
        raise InputError("--t0 must be positive")
    res = tail_split(sys_, args.t0, args.degree, **_sweep_options(args))
    _print_fields([("system", sys_.name), ("t0", _fmt(res.t0)), ("degree", res.degree),
                   ("head", _fmt(res.head)), ("tail_bound", _fmt(res.tail_bound)), ("total", _fmt(res.total))])
    return EXIT_OK


def cmd_reachset(args) -> int:
    sys_ = read_system(args.system)
    if sys_.n != 2:
        raise InputError(f"boundary export needs a planar system, got n={sys_.n}")
    if args.samples < 1:
        raise InputError("--samples must be positive")
    res = sweep(sys_, args.degree, **_sweep_options(args))
    rows = ellipsoid_boundary(res.best, args.degree, args.samples)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["theta", "x1", "x2"])
        for theta, x1, x2 in rows:
            w.writerow([f"{theta:.10g}", f"{x1:.12g}", f"{x2:.12g}"])
    finally:
        if args.out:
            out.close()
    if args.out:
        print(f"wrote {len(rows)} boundary points (degree {args.degree}, alpha {res.best.alpha:.6g}) to {args.out}")
    return EXIT_OK


@dataclass
class BoundReport:
    system_name: str
    exact: float | None = None
    exact_error: float | None = None
    star_d1: float | None = None
    star_d2: float | None = None
    lower_bound: float | None = None
    tail_split_rows: list[tuple[float, int, float]] = field(default_factory=list)
    settings: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)

    def check_ordering(self) -> list[str]:
        """Every pairwise ``lower <= exact <= upper`` relation among the fields that are present."""
        out = []
        lows = [("lower_bound", self.lower_bound)]
        ups = [("star_d1", self.star_d1), ("star_d2", self.star_d2)]
        ups += [(f"tail_split(t0={t0:g}, d={d})", v) for t0, d, v in self.tail_split_rows]
        ex = self.exact
        slack = (self.exact_error or 0.0) + ORDER_SLACK
        if ex is not None:
            for name, v in lows:
                if v is not None and v > ex + slack:
                    out.append(f"{name} {v:.8g} exceeds exact {ex:.8g}")
            for name, v in ups:
                if v is not None and v < ex - slack:
                    out.append(f"{name} {v:.8g} is below exact {ex:.8g}")
        elif self.lower_bound is not None:
            for name, v in ups:
                if v is not None and v < self.lower_bound - ORDER_SLACK:
                    out.append(f"{name} {v:.8g} is below lower_bound {self.lower_bound:.8g}")
        return out


def _timed(report: BoundReport, key: str, fn):
    t = time.perf_counter()
    try:
        return fn()
    except (NumericalError, ValueError) as exc:
        report.errors[key] = f"{type(exc).__name__}: {exc}"
        return None
    finally:
        report.timings[key] = round(time.perf_counter() - t, 4)


def build_report(sys_: LtiSystem, tol: float = 1e-6, dt: float = DEFAULT_DT, horizon: float | None = None,
                 t0s=(), grid_points: int = GRID_POINTS, refine_iterations: int = REFINE_ITERATIONS,
                 multiplier: str = "full") -> BoundReport:
    opts = {"grid_points": grid_points, "refine_iterations": refine_iterations, "multiplier": multiplier}
    rep = BoundReport(sys_.name, settings={
        "exact_tolerance": tol, "dt": dt, "horizon": horizon if horizon is not None else default_horizon(sys_),
        "grid_points": grid_points, "refine_iterations": refine_iterations, "multiplier": multiplier,
        "t0": list(t0s), "version": __version__})
    est = _timed(rep, "exact", lambda: l1_exact(sys_, tol))
    if est is not None:
        rep.exact, rep.exact_error = est.value, est.error_bound
    d1 = _timed(rep, "star_d1", lambda: sweep(sys_, 1, **opts))
    if d1 is not None:
        rep.star_d1 = d1.star_norm
        run = _timed(rep, "lower_bound", lambda: worst_case(sys_, _inverse(d1.best.p), dt, horizon))
        if run is not None:
            rep.lower_bound = run.peak_output
    if sys_.n >= 2:
        d2 = _timed(rep, "star_d2", lambda: sweep(sys_, 2, **opts))
        if d2 is not None:
            rep.star_d2 = d2.star_norm
    for t0 in t0s:
        for d in (1, 2) if sys_.n >= 2 else (1,):
            r = _timed(rep, f"tail_split(t0={t0:g}, d={d})", lambda: tail_split(sys_, t0, d, **opts))
            if r is not None:
                rep.tail_split_rows.append((t0, d, r.total))
    rep.violations = rep.check_ordering()
    return rep


def _inverse(p):
    import numpy as np

    return np.linalg.inv(p)


def print_report(rep: BoundReport):
    _print_fields([("system", rep.system_name),
                   ("exact", _fmt(rep.exact) + ("" if rep.exact_error is None else f"  (± {rep.exact_error:.2g})")),
                   ("star_d1", _fmt(rep.star_d1)), ("star_d2", _fmt(rep.star_d2)),
                   ("lower_bound", _fmt(rep.lower_bound))])
    if rep.tail_split_rows:
        print()
        print(f"{'t0':>8}  {'degree':>6}  {'total':>12}")
        for t0, d, v in rep.tail_split_rows:
            print(f"{t0:8g}  {d:6d}  {v:12.8g}")
    print()
    print("timings [s]: " + ", ".join(f"{k}={v:.2f}" for k, v in rep.timings.items()))
    for k, msg in rep.errors.items():
        print(f"FAILED {k}: {msg}", file=sys.stderr)
    for v in rep.violations:
        print(f"ORDERING VIOLATION: {v}", file=sys.stderr)
    if not rep.violations:
        print("ordering: lower_bound <= exact <= star bounds holds")


def cmd_report(args) -> int:
    sys_ = read_system(args.system)
    rep = build_report(sys_, args.tol, args.dt, args.horizon, args.t0 or (), args.grid, args.refine,
                       args.multiplier)
    print_report(rep)
    if args.out:
        Path(args.out).write_text(json.dumps(asdict(rep), indent=2) + "\n")
    return EXIT_NUMERICAL if rep.errors or rep.violations else EXIT_OK


def _add_sweep_flags(p):
    p.add_argument("--grid", type=int, default=GRID_POINTS, help="log-spaced alpha grid points")
    p.add_argument("--refine", type=int, default=REFINE_ITERATIONS, help="golden-section refinement steps")
    p.add_argument("--multiplier", choices=MULTIPLIERS, default="full",
                   help="degree-2 inequality multiplier structure")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="peakgain", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--verbose", "-v", action="store_true", help="sweep tables and solver logs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exact", help="gain by quadrature of |h| with a certified tail")
    p.add_argument("system")
    p.add_argument("--tol", type=float, default=1e-6, help="relative accuracy")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("star", help="star-norm upper bound")
    p.add_argument("system")
    p.add_argument("--degree", type=int, choices=(1, 2), default=1)
    _add_sweep_flags(p)
    p.set_defaults(func=cmd_star)

    p = sub.add_parser("worstcase", help="bang-bang simulation lower bound")
    p.add_argument("system")
    p.add_argument("--dt", type=float, default=DEFAULT_DT)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--out", help="trajectory CSV")
    p.set_defaults(func=cmd_worstcase)

    p = sub.add_parser("tailsplit", help="quadrature head plus star-norm tail")
    p.add_argument("system")
    p.add_argument("--t0", type=float, required=True)
    p.add_argument("--degree", type=int, choices=(1, 2), default=2)
    _add_sweep_flags(p)
    p.set_defaults(func=cmd_tailsplit)

    p = sub.add_parser("reachset", help="boundary of the optimal inescapable set (planar systems)")
    p.add_argument("system")
    p.add_argument("--degree", type=int, choices=(1, 2), default=1)
    p.add_argument("--samples", type=int, default=360)
    p.add_argument("--out", help="CSV path; standard output when omitted")
    _add_sweep_flags(p)
    p.set_defaults(func=cmd_reachset)

    p = sub.add_parser("report", help="all bounds side by side")
    p.add_argument("system")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--dt", type=float, default=DEFAULT_DT)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--t0", type=float, action="append", help="tail-split row (repeatable)")
    p.add_argument("--out", help="JSON report path")
    _add_sweep_flags(p)
    p.set_defaults(func=cmd_report)
    return parser


def _validate_numbers(args):
    for key in ("tol", "dt", "horizon"):
        v = getattr(args, key, None)
        if v is not None and not (math.isfinite(v) and v > 0):
            raise InputError(f"--{key} must be a positive number")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        _validate_numbers(args)
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
