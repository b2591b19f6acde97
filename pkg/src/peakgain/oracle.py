"""Reference values: the exact peak-to-peak gain and a worst-case lower bound.

The gain of a stable SISO system is ``∫_0^∞ |h(t)| dt`` with
``h(t) = C e^{At} B``. :func:`l1_exact` integrates ``|h|`` on ``[0, T]`` by
adaptive Simpson between the sign changes of ``h`` and bounds the rest with
the degree-1 star norm of the system started from ``e^{AT} B``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .linalg import NumericalError, expm
from .model import LtiSystem

log = logging.getLogger(__name__)

DEFAULT_DT = 1e-3
HORIZON_TIME_CONSTANTS = 10.0
MAX_DOUBLINGS = 16
SAMPLES_PER_FASTEST_CONSTANT = 20
MAX_SIMPSON_DEPTH = 50
MAX_SIMPSON_INTERVALS = 200_000
TAIL_GRID_POINTS = 16
TAIL_REFINE_ITERATIONS = 16


class ImpulseResponse:
    """``t -> C expm(A t) B`` for a fixed system."""

    def __init__(self, sys: LtiSystem):
        self.sys = sys
        self._b = sys.b.ravel()
        self._c = sys.c.ravel()

    def __call__(self, t: float) -> float:
        if t < 0:
            raise ValueError("impulse response is only defined for t >= 0")
        if t == 0:
            return float(self._c @ self._b)
        return float(self._c @ expm(self.sys.a * t) @ self._b)

    def sample(self, t_end: float, num: int) -> tuple[np.ndarray, np.ndarray]:
        """``h`` on ``num`` evenly spaced points of ``[0, t_end]``, by repeated stepping."""
        t = np.linspace(0.0, t_end, num)
        step = expm(self.sys.a * (t[1] - t[0])) if num > 1 else np.eye(self.sys.n)
        x = self._b.copy()
        out = np.empty(num)
        for k in range(num):
            out[k] = self._c @ x
            x = step @ x
        return t, out


def impulse(sys: LtiSystem, t: float) -> float:
    return ImpulseResponse(sys)(t)


@dataclass
class L1Estimate:
    value: float
    truncation_time: float
    tail_bound: float
    quadrature_error: float
    sign_changes: list[float] = field(default_factory=list)

    @property
    def error_bound(self) -> float:
        return self.tail_bound + self.quadrature_error


def _simpson(f, a, b, fa, fm, fb):
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def adaptive_simpson(f, a: float, b: float, tol: float) -> tuple[float, float]:
    """``∫_a^b f`` and an error estimate, subdividing until each piece meets its share of ``tol``.

    Raises :class:`NumericalError` when more than ``MAX_SIMPSON_INTERVALS``
    pieces are needed, which happens when ``tol`` is below rounding level.
    """
    if b <= a:
        return 0.0, 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    total = 0.0
    err = 0.0
    stack = [(a, b, fa, fm, fb, _simpson(f, a, b, fa, fm, fb), tol, 0)]
    pieces = 0
    while stack:
        pieces += 1
        if pieces > MAX_SIMPSON_INTERVALS:
            raise NumericalError(f"adaptive Simpson on [{a:.6g}, {b:.6g}] needed more than "
                                 f"{MAX_SIMPSON_INTERVALS} pieces for tolerance {tol:.3g}")
        lo, hi, flo, fmid, fhi, whole, tol_i, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        fl, fr = f(0.5 * (lo + mid)), f(0.5 * (mid + hi))
        left = _simpson(f, lo, mid, flo, fl, fmid)
        right = _simpson(f, mid, hi, fmid, fr, fhi)
        delta = left + right - whole
        if abs(delta) <= 15.0 * tol_i or depth >= MAX_SIMPSON_DEPTH:
            total += left + right + delta / 15.0
            err += abs(delta) / 15.0
        else:
            stack.append((lo, mid, flo, fl, fmid, left, 0.5 * tol_i, depth + 1))
            stack.append((mid, hi, fmid, fr, fhi, right, 0.5 * tol_i, depth + 1))
    return total, err


def sign_changes(h: ImpulseResponse, t_end: float) -> list[float]:
    """Roots of ``h`` on ``(0, t_end)`` found from sampled sign flips and refined by bracketing."""
    fastest = max(float(np.max(np.abs(np.linalg.eigvals(h.sys.a)))), 1e-12)
    num = int(min(max(SAMPLES_PER_FASTEST_CONSTANT * fastest * t_end, 2000), 2_000_000))
    t, v = h.sample(t_end, num)
    roots = []
    for k in np.nonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)[0]:
        lo, hi = float(t[k]), float(t[k + 1])
        if h(lo) * h(hi) < 0:
            roots.append(brentq(h, lo, hi, xtol=1e-14, rtol=1e-15))
        else:  # stepping and direct evaluation disagree on a sign this close to zero
            roots.append(0.5 * (lo + hi))
    return roots


def integrate_abs(h: ImpulseResponse, t_end: float, tol: float) -> tuple[float, float, list[float]]:
    """``∫_0^{t_end} |h|`` with the absolute error budget ``tol``."""
    roots = sign_changes(h, t_end)
    knots = [0.0] + roots + [t_end]
    total = err = 0.0
    for lo, hi in zip(knots[:-1], knots[1:]):
        share = tol * (hi - lo) / t_end
        val, e = adaptive_simpson(h, lo, hi, share)
        total += abs(val)
        err += e
    return total, err, roots


def _tail_star_norm(sys: LtiSystem, t: float) -> float:
    from .starnorm import sweep  # starnorm depends on this module's neighbours only
    shifted = LtiSystem(sys.a, expm(sys.a * t) @ sys.b, sys.c, sys.name)
    return sweep(shifted, 1, grid_points=TAIL_GRID_POINTS,
                 refine_iterations=TAIL_REFINE_ITERATIONS).star_norm


def l1_exact(sys: LtiSystem, tolerance: float = 1e-6) -> L1Estimate:
    """``∫_0^∞ |C e^{At} B| dt`` to relative accuracy ``tolerance``.

    The tail beyond ``T`` is bounded by the degree-1 star norm of the
    system started from ``e^{AT} B``; ``T`` doubles until that bound is
    below ``tolerance * value / 2``.
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    sys.require_stable()
    h = ImpulseResponse(sys)
    rate = -sys.max_real_part
    t_end = HORIZON_TIME_CONSTANTS / rate
    cnorm = float(np.linalg.norm(sys.c))
    history = []
    for _ in range(MAX_DOUBLINGS):
        _, coarse = h.sample(t_end, 4001)
        rough = float(np.sum(np.abs(coarse)) * t_end / 4000)
        budget = tolerance * max(rough, 1e-300) / 2.0
        # Cheap screen before paying for a certified bound: a tail this large cannot pass.
        leak = cnorm * float(np.linalg.norm(expm(sys.a * t_end) @ sys.b)) / rate
        if leak > 1e3 * budget:
            history.append((t_end, leak))
            t_end *= 2.0
            continue
        tail = _tail_star_norm(sys, t_end)
        history.append((t_end, tail))
        if tail < budget:
            value, qerr, roots = integrate_abs(h, t_end, 0.5 * budget)
            if tail < tolerance * value / 2.0 and tail + qerr <= tolerance * value:
                return L1Estimate(value, t_end, tail, qerr, roots)
        t_end *= 2.0
    raise NumericalError("tail bound did not shrink below the tolerance; (T, bound) history: "
                         + ", ".join(f"({t:.4g}, {b:.3g})" for t, b in history))


@dataclass
class WorstCaseRun:
    p: np.ndarray
    dt: float
    horizon: float
    t: np.ndarray
    x: np.ndarray  # (steps + 1, n)
    u: np.ndarray  # input held over [t_k, t_k + dt)
    y: np.ndarray
    peak_output: float
    peak_time: float

    @property
    def peak_near_end(self) -> bool:
        """The peak sits in the last tenth of the run, so it may not have been reached."""
        return self.peak_time >= 0.9 * self.horizon


def _rk4_matrices(a: np.ndarray, b: np.ndarray, dt: float):
    """One classical RK4 step of ``x' = A x + B u`` with ``u`` constant is ``M x + N u``."""
    n = a.shape[0]
    ha = dt * a
    eye = np.eye(n)
    m = eye + ha @ (eye + ha @ (eye / 2 + ha @ (eye / 6 + ha / 24)))
    nmat = dt * (eye + ha @ (eye / 2 + ha @ (eye / 6 + ha / 24))) @ b
    return m, nmat


def default_horizon(sys: LtiSystem) -> float:
    return HORIZON_TIME_CONSTANTS / abs(sys.max_real_part)


def worst_case(sys: LtiSystem, p, dt: float = DEFAULT_DT, horizon: float | None = None) -> WorstCaseRun:
    """Bang-bang input ``u = sign(x' P B)`` (``sign(0) = +1``) from the origin.

    ``u`` is held over each RK4 step at its value at the step start. The peak
    of ``|y|`` is a lower bound on the peak-to-peak gain.
    """
    p = np.asarray(p, dtype=float)
    n = sys.n
    if p.shape != (n, n):
        raise ValueError(f"P must be {n}x{n}, got {p.shape}")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if horizon is None:
        horizon = default_horizon(sys)
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    steps = max(1, int(math.ceil(horizon / dt - 1e-9)))
    m, nmat = _rk4_matrices(sys.a, sys.b, dt)
    nvec = nmat.ravel()
    pb = (p @ sys.b).ravel()
    xs = np.zeros((steps + 1, n))
    us = np.empty(steps + 1)
    x = np.zeros(n)
    for k in range(steps):
        u = 1.0 if x @ pb >= 0 else -1.0
        us[k] = u
        x = m @ x + nvec * u
        xs[k + 1] = x
    us[steps] = 1.0 if x @ pb >= 0 else -1.0
    ys = xs @ sys.c.ravel()
    t = np.arange(steps + 1) * dt
    k = int(np.argmax(np.abs(ys)))
    return WorstCaseRun(p, dt, steps * dt, t, xs, us, ys, float(abs(ys[k])), float(t[k]))


def default_control_matrix(sys: LtiSystem) -> np.ndarray:
    """Matrix for :func:`worst_case`: the inverse of the optimal degree-1 ellipsoid matrix.

    With the ellipsoid matrix itself the switching function ``x' P B`` keeps
    one sign along the step response for damped systems, so the input never
    switches. The inverse is the shape matrix ``Q`` of ``{x : x' Q^-1 x <= 1}``.
    """
    from .starnorm import sweep

    best = sweep(sys, 1).best
    return np.linalg.inv(best.p)


def write_trajectory_csv(run: WorstCaseRun, path) -> None:
    n = run.x.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + ["u", "y"])
        for k in range(len(run.t)):
            w.writerow([f"{run.t[k]:.10g}"] + [f"{v:.12g}" for v in run.x[k]]
                       + [f"{run.u[k]:.0f}", f"{run.y[k]:.12g}"])
