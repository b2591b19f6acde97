"""Small dense semidefinite programming solver.

Problems are posed over a vector of scalars ``y``::

    minimize    c @ y
    subject to  F0_k + sum_i y_i F_ik  >= 0    (PSD, one per block k)
                y_j >= 0                       (j in sign_constraints)

and solved with an infeasible-start primal-dual path-following method
using Nesterov-Todd scaling and a Mehrotra predictor-corrector. The
matrix multiplier of each block (``X_k``) is the dual variable; its
objective ``-sum_k <F0_k, X_k>`` is a lower bound on ``c @ y``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .linalg import is_symmetric, symmetrize

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITERATIONS = "max_iterations"

FEASIBILITY_TOL = 1e-7
STEP_FRACTION = 0.98
REFINEMENT_STEPS = 2


@dataclass
class LmiBlock:
    """``constant + sum(y[i] * F for i, F in coefficients) >= 0``."""

    constant: np.ndarray
    coefficients: list[tuple[int, np.ndarray]] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.constant.shape[0]

    def value(self, y) -> np.ndarray:
        out = np.array(self.constant, dtype=float)
        for i, f in self.coefficients:
            out = out + y[i] * f
        return out


@dataclass
class SdpProblem:
    num_scalars: int
    objective: np.ndarray
    blocks: list[LmiBlock]
    sign_constraints: tuple[int, ...] = ()
    labels: dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).reshape(-1)
        if self.objective.shape[0] != self.num_scalars:
            raise ValueError(f"objective has length {self.objective.shape[0]}, "
                             f"expected {self.num_scalars}")
        for k, blk in enumerate(self.blocks):
            blk.constant = np.asarray(blk.constant, dtype=float)
            s = blk.size
            mats = [blk.constant] + [f for _, f in blk.coefficients]
            for f in mats:
                if f.shape != (s, s):
                    raise ValueError(f"block {k}: coefficient of shape {f.shape}, expected {(s, s)}")
                if not is_symmetric(f, 1e-12):
                    raise ValueError(f"block {k}: coefficient matrix is not symmetric")
            for i, _ in blk.coefficients:
                if not 0 <= i < self.num_scalars:
                    raise ValueError(f"block {k}: scalar index {i} out of range")
        for j in self.sign_constraints:
            if not 0 <= j < self.num_scalars:
                raise ValueError(f"sign constraint index {j} out of range")

    @classmethod
    def from_affine(cls, objective, affine_blocks, sign_constraints=(), labels=None):
        """Build from blocks given as arrays of shape ``(m + 1, s, s)``.

        Slice 0 is the constant term, slice ``i + 1`` the coefficient of
        ``y[i]``; all-zero coefficients are dropped.
        """
        objective = np.asarray(objective, dtype=float)
        m = objective.shape[0]
        blocks = []
        for aff in affine_blocks:
            aff = np.asarray(aff, dtype=float)
            if aff.shape[0] != m + 1:
                raise ValueError(f"affine block has {aff.shape[0] - 1} coefficients, expected {m}")
            coeffs = [(i, symmetrize(aff[i + 1])) for i in range(m) if np.any(aff[i + 1])]
            blocks.append(LmiBlock(symmetrize(aff[0]), coeffs))
        return cls(m, objective, blocks, tuple(sign_constraints), dict(labels or {}))


@dataclass
class Feasibility:
    min_eigenvalues: list[float]
    sign_violations: list[float]

    @property
    def worst(self) -> float:
        vals = list(self.min_eigenvalues) + [-v for v in self.sign_violations]
        return min(vals) if vals else 0.0

    def ok(self, tol: float = FEASIBILITY_TOL) -> bool:
        return self.worst >= -tol


@dataclass
class SdpSolution:
    y: np.ndarray
    objective_value: float
    dual_value: float
    duality_gap: float  # relative: (primal - dual) / (1 + |primal| + |dual|)
    status: str
    iterations: int
    primal_infeasibility: float = 0.0
    dual_infeasibility: float = 0.0
    certificate: object = None
    diagnostic: str = ""
    history: list[dict] = field(default_factory=list)


def check_feasibility(problem: SdpProblem, y) -> Feasibility:
    """Evaluate each block's minimum eigenvalue and each sign residual at ``y``."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != problem.num_scalars:
        raise ValueError(f"y has length {y.shape[0]}, expected {problem.num_scalars}")
    mins = [float(np.linalg.eigvalsh(symmetrize(b.value(y)))[0]) for b in problem.blocks]
    viol = [float(max(0.0, -y[j])) for j in problem.sign_constraints]
    return Feasibility(mins, viol)


class _Blocks:
    """Dense per-block coefficient stacks, sign constraints folded in as 1x1 blocks."""

    def __init__(self, problem: SdpProblem):
        m = problem.num_scalars
        self.f0 = []
        self.g = []
        for blk in problem.blocks:
            s = blk.size
            g = np.zeros((m, s, s))
            for i, f in blk.coefficients:
                g[i] += f
            self.f0.append(symmetrize(blk.constant))
            self.g.append(g)
        for j in problem.sign_constraints:
            g = np.zeros((m, 1, 1))
            g[j, 0, 0] = 1.0
            self.f0.append(np.zeros((1, 1)))
            self.g.append(g)
        self.sizes = [f.shape[0] for f in self.f0]
        self.order = sum(self.sizes)
        self.mask = None

    def merged(self, xs, zs):
        """One block-diagonal block in place of many; far fewer small numpy calls per iteration."""
        out = object.__new__(_Blocks)
        out.f0 = [scipy.linalg.block_diag(*self.f0)]
        m = self.g[0].shape[0] if self.g else 0
        out.g = [np.stack([scipy.linalg.block_diag(*[g[i] for g in self.g]) for i in range(m)])
                 if m else np.zeros((0, self.order, self.order))]
        out.sizes = [self.order]
        out.order = self.order
        out.mask = scipy.linalg.block_diag(*[np.ones((s, s)) for s in self.sizes])
        out.parts = list(self.sizes)
        return out, [scipy.linalg.block_diag(*xs)], [scipy.linalg.block_diag(*zs)]

    def split(self, mat):
        """Per-block pieces of a merged block-diagonal matrix."""
        out, k = [], 0
        for s in self.parts:
            out.append(mat[k:k + s, k:k + s].copy())
            k += s
        return out

    def affine(self, y):
        return [f0 + (y @ g.reshape(len(y), -1)).reshape(f0.shape) for f0, g in zip(self.f0, self.g)]

    def linear(self, dy):
        return [(dy @ g.reshape(len(dy), -1)).reshape(g.shape[1:]) for g in self.g]

    def adjoint(self, mats):
        return sum(g.reshape(g.shape[0], -1) @ x.ravel() for g, x in zip(self.g, mats))


def _inner(a, b) -> float:
    return float(sum(np.vdot(x, z) for x, z in zip(a, b)))


class _Scaling:
    """Nesterov-Todd scaling of one block: ``G.T @ Z @ G == G^-1 @ X @ G^-T == diag(v)``."""

    def __init__(self, x: np.ndarray, z: np.ndarray):
        lx = np.linalg.cholesky(x)
        lz = np.linalg.cholesky(z)
        _, v, vt = np.linalg.svd(lz.T @ lx)
        self.v = v
        self.g = lx @ vt.T / np.sqrt(v)
        self.ginv = (np.sqrt(v)[:, None] * vt) @ scipy.linalg.solve_triangular(
            lx, np.eye(x.shape[0]), lower=True)

    def to_scaled_x(self, dx):
        return self.ginv @ dx @ self.ginv.T

    def to_scaled_z(self, dz):
        return self.g.T @ dz @ self.g

    def from_scaled(self, r):
        return self.g @ r @ self.g.T

    def max_step(self, scaled_d) -> float:
        """Largest ``t`` with ``diag(v) + t * scaled_d`` positive semidefinite."""
        s = 1.0 / np.sqrt(self.v)
        lam = np.linalg.eigvalsh(symmetrize(s[:, None] * scaled_d * s[None, :]))[0]
        return np.inf if lam >= 0 else -1.0 / lam


def _initial_point(blocks: _Blocks, c: np.ndarray):
    xs, zs = [], []
    for f0, g in zip(blocks.f0, blocks.g):
        s = f0.shape[0]
        if s == 1 and not np.any(f0):
            xs.append(np.ones((1, 1)))
            zs.append(np.ones((1, 1)))
            continue
        gnorm = np.sqrt(np.einsum("iab,iab->i", g, g))
        used = gnorm > 0
        xi_p = max(10.0, np.sqrt(s), s * np.max((1 + np.abs(c[used])) / (1 + gnorm[used]), initial=0.0))
        xi_d = max(10.0, np.sqrt(s), np.linalg.norm(f0), np.max(gnorm, initial=0.0))
        xs.append(xi_p * np.eye(s))
        zs.append(xi_d * np.eye(s))
    return xs, zs


def solve(problem: SdpProblem, tolerance: float = 1e-8, max_iterations: int = 200,
          feasibility_tolerance: float = 1e-9, dual_tolerance: float = 1e-6,
          verbose: bool = False) -> SdpSolution:
    """Solve ``problem``; see the module docstring for the problem form.

    An optimal exit needs the relative duality gap below ``tolerance``, the
    relative LMI residual in ``y`` below ``feasibility_tolerance`` and the
    multiplier residual below ``dual_tolerance``. The multiplier side only
    certifies how tight the bound is, so it gets the looser default.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    blocks = _Blocks(problem)
    c = problem.objective
    m = problem.num_scalars
    y = np.zeros(m)
    xs, zs = _initial_point(blocks, c)
    # Each block's residual is measured against its own data, so a large
    # constant in one block cannot hide an infeasible point in another.
    part_scale = [1.0 + np.linalg.norm(f) for f in blocks.f0]
    blocks, xs, zs = blocks.merged(xs, zs)
    mask = blocks.mask
    cnorm = 1.0 + np.linalg.norm(c)
    f0norm = 1.0 + np.sqrt(sum(np.sum(f * f) for f in blocks.f0))
    history = []
    best = None
    diagnostic = ""

    def finish(status, it, pobj, dobj, pinf, dinf, certificate=None, diag="", y_out=None):
        y_fin = y if y_out is None else y_out
        gap = (pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        return SdpSolution(np.array(y_fin), float(pobj), float(dobj), float(gap), status, it,
                           float(pinf), float(dinf), certificate, diag, history)

    for it in range(max_iterations + 1):
        fy = blocks.affine(y)
        rd = [f - z for f, z in zip(fy, zs)]
        rp = c - blocks.adjoint(xs)
        mu = _inner(xs, zs) / blocks.order
        pobj = float(c @ y)
        dobj = -_inner(blocks.f0, xs)
        # Primal: the LMI residual in y. Dual: the multiplier residual c - A*(X).
        pinf = max(np.linalg.norm(r) / scale for r, scale in zip(blocks.split(rd[0]), part_scale))
        dinf = np.linalg.norm(rp) / cnorm
        relgap = (pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        history.append(dict(iteration=it, primal=pobj, dual=dobj, gap=relgap, mu=mu,
                            primal_infeasibility=pinf, dual_infeasibility=dinf))
        if verbose:
            log.info("sdp it=%3d pobj=% .9e dobj=% .9e gap=%.2e pinf=%.2e dinf=%.2e",
                     it, pobj, dobj, relgap, pinf, dinf)

        if pinf <= feasibility_tolerance and dinf <= 1e3 * dual_tolerance:
            if best is None or abs(relgap) < abs(best[5]):
                best = (y.copy(), pobj, dobj, pinf, dinf, relgap)
        if abs(relgap) <= tolerance and pinf <= feasibility_tolerance and dinf <= dual_tolerance:
            return finish(OPTIMAL, it, pobj, dobj, pinf, dinf)

        # Dual ray: X >= 0 with A(X) ~ 0 and <F0, X> < 0 proves no feasible y exists.
        if dobj > 0 and np.linalg.norm(blocks.adjoint(xs)) / dobj <= 1e-8 * cnorm:
            cert = blocks.split(xs[0] / dobj)
            return finish(INFEASIBLE, it, pobj, dobj, pinf, dinf, cert,
                          "dual ray certifies infeasibility")
        # Primal ray: sum y_i F_i >= 0 with c @ y < 0 proves unboundedness.
        if pobj < -1e8 * f0norm and pinf <= feasibility_tolerance:
            dy = y / -pobj
            if min(np.linalg.eigvalsh(symmetrize(l))[0] for l in blocks.linear(dy)) >= -1e-8:
                return finish(UNBOUNDED, it, pobj, dobj, pinf, dinf, dy,
                              "primal ray certifies unboundedness")
        if it == max_iterations:
            diagnostic = "iteration limit reached"
            break

        try:
            sc = [_Scaling(x, z) for x, z in zip(xs, zs)]
            # Schur complement M = A^T A with columns vec(G^T F_i G); factor A by QR.
            cols = np.concatenate([(s.g.T @ g @ s.g).reshape(m, -1)
                                   for s, g in zip(sc, blocks.g)], axis=1)
            r_fac = scipy.linalg.qr(cols.T, mode="r")[0][:m]
            diag_r = np.abs(np.diag(r_fac))
            if diag_r.min() <= 1e-15 * diag_r.max():
                raise np.linalg.LinAlgError(
                    f"rank-deficient Newton system (ratio {diag_r.min() / diag_r.max():.1e})")
        except np.linalg.LinAlgError as exc:
            diagnostic = f"Newton system breakdown at iteration {it}: {exc}"
            break

        wrw = [s.from_scaled(s.to_scaled_z(r)) for s, r in zip(sc, rd)]

        def schur_solve(rhs):
            tmp = scipy.linalg.solve_triangular(r_fac, rhs, trans="T")
            return scipy.linalg.solve_triangular(r_fac, tmp)

        def direction(rc_scaled):
            # rc_scaled: right side of the scaled centering equation, V dX + dX V = rc.
            k_terms = []
            for s, rc in zip(sc, rc_scaled):
                vv = s.v[:, None] + s.v[None, :]
                k_terms.append(s.from_scaled(rc / vv))
            base = [k - t for k, t in zip(k_terms, wrw)]
            dy = schur_solve(blocks.adjoint(base) - rp)
            for _ in range(REFINEMENT_STEPS + 1):
                dz = [r + l for r, l in zip(rd, blocks.linear(dy))]
                dx = [symmetrize(k - s.from_scaled(s.to_scaled_z(d)))
                      for k, s, d in zip(k_terms, sc, dz)]
                # The step should restore c == A*(X); correct what rounding left behind.
                err = rp - blocks.adjoint(dx)
                dy = dy - schur_solve(err)
            dz = [r + l for r, l in zip(rd, blocks.linear(dy))]
            dx = [symmetrize(k - s.from_scaled(s.to_scaled_z(d)))
                  for k, s, d in zip(k_terms, sc, dz)]
            history[-1]["newton_residual"] = float(np.linalg.norm(rp - blocks.adjoint(dx)))
            history[-1]["dx_norm"] = float(np.sqrt(sum(np.sum(d * d) for d in dx)))
            return dy, dx, dz

        def steps(dx, dz):
            dxs = [s.to_scaled_x(d) for s, d in zip(sc, dx)]
            dzs = [s.to_scaled_z(d) for s, d in zip(sc, dz)]
            ap = min([1.0] + [STEP_FRACTION * s.max_step(d) for s, d in zip(sc, dxs)])
            ad = min([1.0] + [STEP_FRACTION * s.max_step(d) for s, d in zip(sc, dzs)])
            return ap, ad, dxs, dzs

        try:
            dy_a, dx_a, dz_a = direction([-2.0 * np.diag(s.v ** 2) for s in sc])
            ap, ad, dxs_a, dzs_a = steps(dx_a, dz_a)
            mu_aff = _inner([x + ap * d for x, d in zip(xs, dx_a)],
                            [z + ad * d for z, d in zip(zs, dz_a)]) / blocks.order
            sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3 if mu > 0 else 0.0
            rc = []
            for s, dxa, dza in zip(sc, dxs_a, dzs_a):
                cross = dxa @ dza
                rc.append(2.0 * np.diag(sigma * mu - s.v ** 2) - (cross + cross.T))
            dy, dx, dz = direction(rc)
            ap, ad, _, _ = steps(dx, dz)
            history[-1].update(primal_step=ad, dual_step=ap, sigma=sigma)
        except np.linalg.LinAlgError as exc:
            diagnostic = f"lost positive definiteness at iteration {it}: {exc}"
            break
        xs = [symmetrize(x + ap * d) * mask for x, d in zip(xs, dx)]
        zs = [symmetrize(z + ad * d) * mask for z, d in zip(zs, dz)]
        y = y + ad * dy
        if max(ap, ad) < 1e-12:
            diagnostic = f"step length stalled at iteration {it}"
            break

    last = history[-1]
    if best is not None:
        yb, pobj, dobj, pinf, dinf, _ = best
    else:
        yb, pobj, dobj, pinf, dinf = (y, last["primal"], last["dual"],
                                      last["primal_infeasibility"], last["dual_infeasibility"])
    return finish(MAX_ITERATIONS, len(history) - 1, pobj, dobj, pinf, dinf,
                  diag=diagnostic, y_out=yb)
