"""Shared fixtures-by-cache for the test modules: bundled systems, sweeps, simulations."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.linalg

from peakgain.cli import read_system
from peakgain.model import LtiSystem
from peakgain.oracle import default_horizon, l1_exact
from peakgain.starnorm import sweep
from peakgain.tailsplit import tail_split

NAMES = ("high_damping", "low_damping", "stiff")

# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []
# Every sweep run through the helpers below, for the solver audit.
ALL_SWEEPS: list = []


def tracked_sweep(sys: LtiSystem, degree: int, **kwargs):
    res = sweep(sys, degree, **kwargs)
    ALL_SWEEPS.append(res)
    return res


@lru_cache(maxsize=None)
def system(name: str) -> LtiSystem:
    return read_system(name)


@lru_cache(maxsize=None)
def swept(name: str, degree: int, multiplier: str = "full", grid_points: int = 64,
          refine_iterations: int = 40):
    return tracked_sweep(system(name), degree, grid_points=grid_points,
                         refine_iterations=refine_iterations, multiplier=multiplier)


@lru_cache(maxsize=None)
def exact(name: str, tolerance: float = 1e-6):
    return l1_exact(system(name), tolerance)


@lru_cache(maxsize=None)
def split(name: str, t0: float, degree: int):
    res = tail_split(system(name), t0, degree)
    ALL_SWEEPS.append(res.sweep)
    return res


def random_stable(rng: np.random.Generator, n: int) -> LtiSystem:
    """Gaussian ``A`` shifted left until its slowest mode decays at a random rate in ``[0.3, 2]``."""
    m = rng.normal(size=(n, n))
    shift = np.max(np.linalg.eigvals(m).real) + rng.uniform(0.3, 2.0)
    return LtiSystem(m - shift * np.eye(n), rng.normal(size=(n, 1)), rng.normal(size=(1, n)))


@lru_cache(maxsize=None)
def random_systems(n_values: tuple[int, ...] = (2, 3), count: int = 20, seed: int = 7) -> tuple[LtiSystem, ...]:
    rng = np.random.default_rng(seed)
    return tuple(random_stable(rng, n_values[k % len(n_values)]) for k in range(count))


def zoh(sys: LtiSystem, dt: float):
    """Exact discretization of ``x' = A x + B u`` with ``u`` held over each step."""
    n = sys.n
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = sys.a * dt
    aug[:n, n:] = sys.b * dt
    e = scipy.linalg.expm(aug)
    return e[:n, :n], e[:n, n]


@lru_cache(maxsize=None)
def random_input_states(name: str, count: int = 1000, steps: int = 2000, seed: int = 11) -> np.ndarray:
    """States of ``count`` trajectories from the origin under random inputs with ``|u| <= 1``.

    A third of the inputs are uniform noise, a third random bang-bang with
    random dwell times and a third saturated sinusoids. Shape is
    ``(steps + 1, count, n)``.
    """
    sys = system(name)
    rng = np.random.default_rng(seed)
    horizon = default_horizon(sys)
    dt = horizon / steps
    ad, bd = zoh(sys, dt)
    t = np.arange(steps) * dt
    u = np.empty((steps, count))
    third = count // 3
    u[:, :third] = rng.uniform(-1.0, 1.0, size=(steps, third))
    for j in range(third, 2 * third):
        dwell = rng.integers(1, max(2, steps // 10))
        signs = rng.choice([-1.0, 1.0], size=steps // dwell + 1)
        u[:, j] = np.repeat(signs, dwell)[:steps]
    rates = rng.uniform(0.05, 5.0, size=count - 2 * third) * abs(sys.max_real_part)
    phases = rng.uniform(0, 2 * np.pi, size=count - 2 * third)
    u[:, 2 * third:] = np.clip(3.0 * np.sin(np.outer(t, rates) + phases), -1.0, 1.0)
    x = np.zeros((steps + 1, count, sys.n))
    for k in range(steps):
        x[k + 1] = x[k] @ ad.T + np.outer(u[k], bd)
    return x


def report(criterion: int, passed: bool, detail: str) -> bool:
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {criterion:2d}: {detail}")
    return passed


def cvxpy_solve(problem):
    """Solve an :class:`SdpProblem` with an external conic solver; returns ``(value, y)``."""
    import cvxpy as cp

    y = cp.Variable(problem.num_scalars)
    cons = []
    for blk in problem.blocks:
        expr = blk.constant + sum(y[i] * f for i, f in blk.coefficients)
        if blk.size == 1:
            cons.append(expr >= 0)
        else:
            s = cp.Variable((blk.size, blk.size), PSD=True)
            cons.append(s == expr)
    cons += [y[j] >= 0 for j in problem.sign_constraints]
    prob = cp.Problem(cp.Minimize(problem.objective @ y), cons)
    prob.solve(solver="CLARABEL")
    return prob.value, y.value
