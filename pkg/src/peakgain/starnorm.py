"""Inescapable-ellipsoid bounds on the peak-to-peak gain (star norm).

For each S-procedure scalar ``alpha`` an SDP finds the ellipsoid
``V(x) <= 1`` that unit-peak inputs cannot leave and that minimizes the
output bound ``N_alpha = sqrt(C P^-1 C^T)``. The star norm is the least such
bound over ``alpha``. Degree 2 works on the lifted state ``x ⊗ x`` so that
``V`` is a quartic form of ``x``.

All SDPs are solved on a rescaled copy of the system (unit-norm ``B``,
balanced state coordinates, output scaled so the bound is near one). Both
relaxations are invariant under that rescaling; results are mapped back.
"""

from __future__ import annotations

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .linalg import NumericalError, expm, solve_spd, symmetrize
from .model import LiftedSystem, LtiSystem, SProcedureStructure, lift, sprocedure_structure
from .sdp import MAX_ITERATIONS, OPTIMAL, SdpProblem, SdpSolution, check_feasibility, solve

log = logging.getLogger(__name__)

EPSILON = 1e-8
# Upper bound on trace(P) in normalized coordinates. It keeps the feasible set
# bounded when the optimal ellipsoid degenerates (reachable set in a proper
# subspace); any feasible P still certifies a valid bound.
TRACE_CAP = 1e6
GRID_POINTS = 64
REFINE_ITERATIONS = 40
GRID_LOW, GRID_HIGH = 0.01, 0.99
MULTIPLIERS = ("diagonal", "full")
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class SweepError(NumericalError):
    """No alpha on the sweep grid produced a solved SDP."""


def symmetric_basis(k: int) -> np.ndarray:
    """Basis of symmetric ``k x k`` matrices, ones at ``(i, j)`` and ``(j, i)`` for ``i <= j``."""
    out = []
    for i in range(k):
        for j in range(i, k):
            e = np.zeros((k, k))
            e[i, j] = e[j, i] = 1.0
            out.append(e)
    return np.array(out)


def lifted_symmetric_basis(n: int) -> np.ndarray:
    """Orthonormal basis (columns) of the symmetric part of ``R^n ⊗ R^n``.

    ``x ⊗ x`` always lies in this subspace.
    """
    cols = []
    for p in range(n):
        for q in range(p, n):
            v = np.zeros(n * n)
            v[p * n + q] += 1.0
            v[q * n + p] += 1.0
            cols.append(v / np.linalg.norm(v))
    return np.array(cols).T


def _antisymmetric_basis(n: int) -> np.ndarray:
    cols = []
    for p in range(n):
        for q in range(p + 1, n):
            v = np.zeros(n * n)
            v[p * n + q] = 1.0
            v[q * n + p] = -1.0
            cols.append(v / math.sqrt(2.0))
    return np.array(cols).T.reshape(n * n, -1)


@dataclass
class StarSdp:
    """An SDP for one ``alpha`` plus what is needed to read ``P`` back."""

    problem: SdpProblem
    degree: int
    alpha: float
    p_basis: np.ndarray  # (k, r, r); P (reduced) = sum y[i] * p_basis[i]
    output: np.ndarray  # C in the reduced coordinates
    embed: np.ndarray | None = None  # n^2 x r, degree 2 only
    base_dim: int = 0

    def reduced_p(self, y) -> np.ndarray:
        return symmetrize(np.tensordot(np.asarray(y)[: len(self.p_basis)], self.p_basis, axes=1))

    def full_p(self, y) -> np.ndarray:
        """``P`` on the full state (degree 1) or the full ``n^2`` lifted state (degree 2).

        The lifted ``P`` acts on the antisymmetric part of ``x ⊗ x``, which is
        always zero, as a multiple of the identity; that choice leaves ``V``
        and ``C P^-1 C^T`` unchanged and keeps ``P`` positive definite.
        """
        q = self.reduced_p(y)
        if self.embed is None:
            return q
        na = _antisymmetric_basis(self.base_dim)
        rho = float(np.trace(q)) / q.shape[0]
        return symmetrize(self.embed @ q @ self.embed.T + rho * na @ na.T)

    def output_gain(self, y) -> float:
        """``C P^-1 C^T`` at the solution ``y``."""
        c = self.output.reshape(-1)
        return float(c @ solve_spd(self.reduced_p(y), c))


def _check_alpha(alpha: float, kappa: float):
    if not (alpha > 0 and alpha < kappa):
        raise ValueError(f"alpha={alpha:.6g} is outside the admissible interval (0, {kappa:.6g})")


def _trace_cap_block(p_basis: np.ndarray, m: int, cap: float) -> np.ndarray:
    blk = np.zeros((m + 1, 1, 1))
    blk[0][0, 0] = cap
    for i, e in enumerate(p_basis):
        blk[i + 1][0, 0] = -np.trace(e)
    return blk


def build_sdp_d1(sys: LtiSystem, alpha: float, epsilon: float = EPSILON,
                 trace_cap: float | None = TRACE_CAP) -> StarSdp:
    """Degree-1 SDP in ``(P, t)``: minimize ``t`` subject to

    ``-[[A'P + PA + aP, PB], [B'P, -a]] >= 0``, ``P - eps I >= 0`` and
    ``[[P, C'], [C, t]] >= 0``.
    """
    _check_alpha(alpha, sys.kappa)
    a, b, c = sys.a, sys.b, sys.c
    n = sys.n
    basis = symmetric_basis(n)
    k = len(basis)
    m = k + 1
    lyap = np.zeros((m + 1, n + 1, n + 1))
    lyap[0][n, n] = alpha
    pos = np.zeros((m + 1, n, n))
    pos[0] = -epsilon * np.eye(n)
    epi = np.zeros((m + 1, n + 1, n + 1))
    epi[0][:n, n] = c.ravel()
    epi[0][n, :n] = c.ravel()
    epi[m][n, n] = 1.0
    for i, e in enumerate(basis):
        pb = e @ b
        lyap[i + 1][:n, :n] = -(a.T @ e + e @ a + alpha * e)
        lyap[i + 1][:n, n:] = -pb
        lyap[i + 1][n:, :n] = -pb.T
        pos[i + 1] = e
        epi[i + 1][:n, :n] = e
    obj = np.zeros(m)
    obj[k] = 1.0
    blocks = [lyap, pos, epi]
    if trace_cap is not None:
        blocks.append(_trace_cap_block(basis, m, trace_cap))
    problem = SdpProblem.from_affine(obj, blocks,
                                     labels={"degree": 1, "alpha": alpha, "epigraph": k})
    return StarSdp(problem, 1, alpha, basis, c.ravel().copy(), base_dim=n)


def _equality_basis(mats: list[np.ndarray]) -> list[np.ndarray]:
    """Orthonormal basis for the span of ``mats``.

    The equality multipliers are free, so only the span matters; after the
    projection onto the symmetric subspace some of them become dependent
    (for ``n >= 3``) and would leave the Newton system singular.
    """
    if not mats:
        return []
    shape = mats[0].shape
    flat = np.array([m.ravel() for m in mats])
    u, s, vt = np.linalg.svd(flat, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * s[0]))
    return [vt[i].reshape(shape) for i in range(rank)]


def build_sdp_d2(lifted: LiftedSystem, structure: SProcedureStructure, alpha: float,
                 multiplier: str = "full", epsilon: float = EPSILON,
                 trace_cap: float | None = TRACE_CAP) -> StarSdp:
    """Degree-2 SDP on the lifted system.

    The LMI is taken in ``(zeta, w, 1)`` with ``zeta`` restricted to the
    symmetric subspace that contains every ``x ⊗ x``::

        [[Q Al + Al' Q + a Q,  Q Bl + sum g_j E_j,  z],
         [ .                ,  -L               ,  0],
         [ z'               ,  0                , -a]] <= 0

    ``L`` multiplies ``w w' <= x x'``: with ``multiplier="diagonal"`` it is
    ``diag(beta)``, ``beta >= 0`` (only ``w_i^2 <= zeta_ii`` is used); with
    ``"full"`` it is any PSD matrix. ``z`` is ``vec(L)/2`` in the reduced
    coordinates, which for the diagonal case puts ``beta_i/2`` on ``zeta_ii``.
    """
    if multiplier not in MULTIPLIERS:
        raise ValueError(f"multiplier must be one of {MULTIPLIERS}, got {multiplier!r}")
    _check_alpha(alpha, lifted.kappa)
    n = lifted.base_dim
    if structure.n != n:
        raise ValueError(f"structure is for n={structure.n}, lifted system has n={n}")
    ns = lifted_symmetric_basis(n)
    r = ns.shape[1]
    al = ns.T @ lifted.a_lift @ ns
    bl = ns.T @ lifted.b_lift
    cl = (lifted.c_lift @ ns).ravel()
    p_basis = symmetric_basis(r)
    if multiplier == "full":
        lam_basis = symmetric_basis(n)
    else:
        lam_basis = np.array([np.diag(np.eye(n)[i]) for i in range(n)])
    eqs = _equality_basis([ns.T @ e for e in structure.equality_matrices])

    kp, kl, ke = len(p_basis), len(lam_basis), len(eqs)
    lam0, eq0, t_idx = kp, kp + kl, kp + kl + ke
    m = t_idx + 1
    size = r + n + 1
    lyap = np.zeros((m + 1, size, size))
    lyap[0][-1, -1] = alpha
    for i, e in enumerate(p_basis):
        blk = np.zeros((size, size))
        blk[:r, :r] = e @ al + al.T @ e + alpha * e
        blk[:r, r:r + n] = e @ bl
        blk[r:r + n, :r] = (e @ bl).T
        lyap[i + 1] = -blk
    for i, lam in enumerate(lam_basis):
        blk = np.zeros((size, size))
        blk[r:r + n, r:r + n] = -lam
        z = ns.T @ lam.reshape(-1) / 2.0
        blk[:r, -1] = z
        blk[-1, :r] = z
        lyap[lam0 + i + 1] = -blk
    for i, e in enumerate(eqs):
        blk = np.zeros((size, size))
        blk[:r, r:r + n] = e
        blk[r:r + n, :r] = e.T
        lyap[eq0 + i + 1] = -blk

    pos = np.zeros((m + 1, r, r))
    pos[0] = -epsilon * np.eye(r)
    epi = np.zeros((m + 1, r + 1, r + 1))
    epi[0][:r, r] = cl
    epi[0][r, :r] = cl
    epi[m][r, r] = 1.0
    for i, e in enumerate(p_basis):
        pos[i + 1] = e
        epi[i + 1][:r, :r] = e
    blocks = [lyap, pos, epi]
    if trace_cap is not None:
        blocks.append(_trace_cap_block(p_basis, m, trace_cap))
    signs: tuple[int, ...] = ()
    if multiplier == "full":
        lam_blk = np.zeros((m + 1, n, n))
        for i, lam in enumerate(lam_basis):
            lam_blk[lam0 + i + 1] = lam
        blocks.append(lam_blk)
    else:
        signs = tuple(range(lam0, lam0 + kl))
    obj = np.zeros(m)
    obj[t_idx] = 1.0
    problem = SdpProblem.from_affine(
        obj, blocks, signs,
        labels={"degree": 2, "alpha": alpha, "multiplier": multiplier, "epigraph": t_idx,
                "multipliers": (lam0, eq0)})
    return StarSdp(problem, 2, alpha, p_basis, cl, embed=ns, base_dim=n)


def _rough_l1(sys: LtiSystem, steps: int = 4000) -> float:
    """Riemann sum of ``|C e^{At} B|`` over about 30 slowest time constants."""
    rate = -sys.max_real_part
    dt = 30.0 / rate / steps
    step = expm(sys.a * dt)
    c = sys.c.ravel()
    x = sys.b.ravel().copy()
    total = 0.0
    for _ in range(steps):
        total += abs(c @ x) * dt
        x = step @ x
    return float(total)


@dataclass(frozen=True)
class Normalization:
    """``x = input_scale * T @ x_n`` and ``y = output_scale * y_n``.

    ``T`` comes from the controllability Gramian ``W`` of the unit-norm input.
    With ``diagonal=False`` it is ``W^(1/2)``, which turns the impulse
    reachable set into a ball; otherwise it is ``sqrt(diag(W))``, which only
    equalizes state magnitudes. The second form is needed when the
    relaxation itself depends on the coordinates (diagonal multipliers).
    """

    transform: np.ndarray
    input_scale: float
    output_scale: float

    @classmethod
    def for_system(cls, sys: LtiSystem, diagonal: bool = False) -> "Normalization":
        n = sys.n
        sb = float(np.linalg.norm(sys.b))
        if sb == 0:
            return cls(np.eye(n), 1.0, 1.0)
        b1 = sys.b / sb
        gram = symmetrize(scipy.linalg.solve_continuous_lyapunov(sys.a, -b1 @ b1.T))
        if diagonal:
            d = np.sqrt(np.clip(np.diag(gram), 0.0, None))
            d = np.where(d > 1e-8 * d.max(), d, max(d.max(), 1.0))
            t = np.diag(d)
        else:
            w, u = np.linalg.eigh(gram)
            w = np.clip(w, 1e-12 * max(w.max(), 1e-300), None)
            t = (u * np.sqrt(w)) @ u.T
        unit = cls(t, sb, 1.0).apply(sys)
        est = _rough_l1(unit)
        if not est > 0:
            est = float(np.linalg.norm(unit.c)) or 1.0
        return cls(t, sb, est)

    def apply(self, sys: LtiSystem) -> LtiSystem:
        t = self.transform
        tinv_a = np.linalg.solve(t, sys.a)
        return LtiSystem(tinv_a @ t, np.linalg.solve(t, sys.b) / self.input_scale,
                         sys.c @ t / self.output_scale, sys.name)

    @property
    def gain(self) -> float:
        """Factor mapping a normalized peak gain back to the original system."""
        return self.input_scale * self.output_scale

    def restore_p(self, p: np.ndarray, degree: int) -> np.ndarray:
        """Ellipsoid matrix in original coordinates from the normalized one."""
        tinv = np.linalg.inv(self.transform)
        if degree == 2:
            tinv = np.kron(tinv, tinv)
        return symmetrize(tinv.T @ p @ tinv) / self.input_scale ** (2 * degree)


@dataclass
class SweepPoint:
    alpha: float
    p: np.ndarray | None = None
    n_alpha: float | None = None
    feasible: bool = False
    status: str = ""
    diagnostic: str = ""


@dataclass
class SweepResult:
    points: list[SweepPoint]
    kappa: float
    best: SweepPoint
    star_norm: float
    degree: int
    multiplier: str = "full"
    solutions: list[SdpSolution] = field(default_factory=list, repr=False)
    problems: list[SdpProblem] = field(default_factory=list, repr=False)  # parallel to solutions

    def feasible_points(self) -> list[SweepPoint]:
        return [p for p in self.points if p.feasible]


class _Evaluator:
    """Solves the degree-``d`` SDP of a normalized system at a given alpha."""

    def __init__(self, sys: LtiSystem, degree: int, multiplier: str, tolerance: float,
                 max_iterations: int):
        self.norm = Normalization.for_system(sys, diagonal=(degree == 2 and multiplier == "diagonal"))
        self.scaled = self.norm.apply(sys)
        self.degree = degree
        self.multiplier = multiplier
        self.tolerance = tolerance
        self.max_iterations = max_iterations
        if degree == 2:
            self.lifted = lift(self.scaled)
            self.structure = sprocedure_structure(sys.n)
            self.kappa = self.lifted.kappa
        else:
            self.kappa = self.scaled.kappa
        self.solutions: list[SdpSolution] = []
        self.problems: list[SdpProblem] = []
        self._lock = threading.Lock()

    def __call__(self, alpha: float) -> SweepPoint:
        if self.degree == 2:
            sdp = build_sdp_d2(self.lifted, self.structure, alpha, self.multiplier)
        else:
            sdp = build_sdp_d1(self.scaled, alpha)
        sol = solve(sdp.problem, tolerance=self.tolerance, max_iterations=self.max_iterations)
        with self._lock:
            self.solutions.append(sol)
            self.problems.append(sdp.problem)
        diagnostic = sol.diagnostic
        if sol.status != OPTIMAL:
            # Any P satisfying the constraints certifies a valid bound; a stalled
            # solve only loses the guarantee that it is the best one at this alpha.
            if sol.status != MAX_ITERATIONS or not check_feasibility(sdp.problem, sol.y).ok():
                return SweepPoint(alpha, status=sol.status, diagnostic=diagnostic)
            diagnostic = f"{diagnostic}; primal feasible, optimality not certified"
        try:
            gain = sdp.output_gain(sol.y)
        except NumericalError as exc:
            return SweepPoint(alpha, status=sol.status, diagnostic=str(exc))
        # Output gain of the lifted system scales with the square of the original gain.
        n_alpha = math.sqrt(gain) * self.norm.gain ** self.degree
        p = self.norm.restore_p(sdp.full_p(sol.y), self.degree)
        return SweepPoint(alpha, p, n_alpha, True, sol.status, diagnostic)


def _value(point: SweepPoint) -> float:
    return point.n_alpha if point.feasible else math.inf


def sweep(sys: LtiSystem, degree: int = 1, grid_points: int = GRID_POINTS,
          refine_iterations: int = REFINE_ITERATIONS, multiplier: str = "full",
          tolerance: float = 1e-8, max_iterations: int = 200, workers: int = 1) -> SweepResult:
    """Star norm of ``sys`` at the given degree.

    ``N_alpha`` is evaluated on a log-spaced grid over ``(0, kappa)`` and the
    best grid point is refined by golden-section search between its
    neighbours. For degree 2 ``star_norm`` is the square root of the lifted
    bound, i.e. a bound on the original system's gain.
    """
    if degree not in (1, 2):
        raise ValueError(f"degree must be 1 or 2, got {degree}")
    if grid_points < 8:
        raise ValueError("grid_points must be at least 8")
    if refine_iterations < 0:
        raise ValueError("refine_iterations must be non-negative")
    sys.require_stable()
    ev = _Evaluator(sys, degree, multiplier, tolerance, max_iterations)
    kappa = ev.kappa
    grid = np.geomspace(GRID_LOW * kappa, GRID_HIGH * kappa, grid_points)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(ev, grid))
    else:
        points = [ev(a) for a in grid]
    values = np.array([_value(p) for p in points])
    if not np.isfinite(values).any():
        statuses = sorted({p.status for p in points})
        raise SweepError(f"no alpha in (0, {kappa:.6g}) gave a solved SDP; statuses: {statuses}")
    i = int(np.argmin(values))
    best = points[i]

    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    refined = []
    if refine_iterations > 0 and hi > lo:
        x1 = hi - INV_PHI * (hi - lo)
        x2 = lo + INV_PHI * (hi - lo)
        p1, p2 = ev(x1), ev(x2)
        refined += [p1, p2]
        for _ in range(refine_iterations - 2):
            if _value(p1) <= _value(p2):
                hi, x2, p2 = x2, x1, p1
                x1 = hi - INV_PHI * (hi - lo)
                p1 = ev(x1)
                refined.append(p1)
            else:
                lo, x1, p1 = x1, x2, p2
                x2 = lo + INV_PHI * (hi - lo)
                p2 = ev(x2)
                refined.append(p2)
        for p in refined:
            if _value(p) < _value(best):
                best = p
    all_points = sorted(points + refined, key=lambda p: p.alpha)
    star = best.n_alpha if degree == 1 else math.sqrt(best.n_alpha)
    log.debug("sweep degree=%d kappa=%.6g best alpha=%.6g star=%.8g", degree, kappa, best.alpha, star)
    return SweepResult(all_points, kappa, best, star, degree, multiplier, ev.solutions, ev.problems)


def star_norm(sys: LtiSystem, degree: int = 1, **kwargs) -> float:
    return sweep(sys, degree, **kwargs).star_norm


def ellipsoid_boundary(point: SweepPoint, degree: int, directions: int = 360) -> np.ndarray:
    """Boundary of ``{x : V(x) <= 1}`` for a planar system, one row per direction.

    Columns are ``theta, x1, x2``.
    """
    if not point.feasible or point.p is None:
        raise ValueError("boundary needs a feasible sweep point")
    if degree not in (1, 2):
        raise ValueError(f"degree must be 1 or 2, got {degree}")
    n = int(round(point.p.shape[0] ** (1.0 / degree)))
    if n != 2:
        raise ValueError(f"boundary export supports planar systems only, got n={n}")
    if directions < 1:
        raise ValueError("directions must be positive")
    theta = np.linspace(0.0, 2.0 * math.pi, directions, endpoint=False)
    v = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    if degree == 1:
        r = np.einsum("ki,ij,kj->k", v, point.p, v) ** -0.5
    else:
        vv = np.einsum("ki,kj->kij", v, v).reshape(directions, 4)
        r = np.einsum("ki,ij,kj->k", vv, point.p, vv) ** -0.25
    return np.column_stack([theta, r[:, None] * v])
