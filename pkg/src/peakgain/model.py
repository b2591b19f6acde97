"""SISO LTI systems, degree-2 Kronecker lifting and S-procedure constraint data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import as_matrix, eigenvalues, kron_power, kron_sum

STABILITY_MARGIN = 1e-9


class UnstableSystemError(ValueError):
    """The state matrix is not Hurwitz."""

    def __init__(self, max_real_part: float):
        super().__init__(f"system is not Hurwitz stable: max real part of eig(A) is {max_real_part:.6g}")
        self.max_real_part = max_real_part


@dataclass(frozen=True, eq=False)
class LtiSystem:
    """``x' = A x + B u``, ``y = C x`` with scalar input and output."""

    a: np.ndarray
    b: np.ndarray  # n x 1
    c: np.ndarray  # 1 x n
    name: str = ""

    def __post_init__(self):
        a = as_matrix(self.a, "A")
        n = a.shape[0]
        if a.shape != (n, n):
            raise ValueError(f"A must be square, got shape {a.shape}")
        b = as_matrix(np.reshape(self.b, (-1, 1)) if np.ndim(self.b) == 1 else self.b, "B")
        c = as_matrix(np.reshape(self.c, (1, -1)) if np.ndim(self.c) == 1 else self.c, "C")
        if b.shape != (n, 1):
            raise ValueError(f"B must be {n}x1, got shape {b.shape}")
        if c.shape != (1, n):
            raise ValueError(f"C must be 1x{n}, got shape {c.shape}")
        for key, val in (("a", a), ("b", b), ("c", c)):
            val.setflags(write=False)
            object.__setattr__(self, key, val)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def max_real_part(self) -> float:
        return eigenvalues(self.a).max_real_part

    @property
    def kappa(self) -> float:
        """Upper end of the admissible S-procedure scalar range."""
        return -2.0 * self.max_real_part

    def is_stable(self) -> bool:
        return self.max_real_part < -STABILITY_MARGIN

    def require_stable(self) -> "LtiSystem":
        mrp = self.max_real_part
        if not mrp < -STABILITY_MARGIN:
            raise UnstableSystemError(mrp)
        return self

    def with_input(self, b) -> "LtiSystem":
        return LtiSystem(self.a, b, self.c, self.name)

    def to_record(self) -> dict:
        return {"name": self.name, "A": self.a.tolist(),
                "B": self.b.ravel().tolist(), "C": self.c.ravel().tolist()}


def load_system(record: dict) -> LtiSystem:
    """Validate a ``{"A": ..., "B": ..., "C": ..., "name": ...}`` record.

    ``KeyError`` names a missing key; ``ValueError`` covers shape and finiteness
    problems; :class:`UnstableSystemError` carries the offending eigenvalue part.
    """
    for key in ("A", "B", "C"):
        if key not in record:
            raise KeyError(key)
    b = np.asarray(record["B"], dtype=float)
    c = np.asarray(record["C"], dtype=float)
    sys = LtiSystem(record["A"], b.reshape(-1, 1) if b.ndim <= 1 else b,
                    c.reshape(1, -1) if c.ndim <= 1 else c, str(record.get("name", "")))
    return sys.require_stable()


@dataclass(frozen=True, eq=False)
class LiftedSystem:
    """Dynamics of ``zeta = x ⊗ x`` driven by ``w = u x``; output ``eta = y^2``."""

    a_lift: np.ndarray
    b_lift: np.ndarray
    c_lift: np.ndarray
    base_dim: int
    degree: int = 2

    @property
    def kappa(self) -> float:
        return -2.0 * eigenvalues(self.a_lift).max_real_part


def lift(sys: LtiSystem) -> LiftedSystem:
    if sys.n < 2:
        raise ValueError("lifting needs a state dimension of at least 2")
    return LiftedSystem(kron_sum(sys.a, 2), kron_sum(sys.b, 2), kron_power(sys.c, 2), sys.n)


def zeta_index(p: int, q: int, n: int) -> int:
    """1-based position of ``x_p x_q`` inside ``x ⊗ x``."""
    return (p - 1) * n + q


@dataclass(frozen=True, eq=False)
class SProcedureStructure:
    """Quadratic constraints that hold on the lifted manifold for ``|u| <= 1``.

    ``inequality_indices[i]`` is the (1-based) zeta coordinate bounding
    ``w_i^2``; each ``E`` in ``equality_matrices`` satisfies
    ``zeta.T @ E @ w == 0``. ``equality_labels`` records ``(i, j, k)`` for
    ``w_i zeta[jk] - w_j zeta[ik]``.
    """

    n: int
    inequality_indices: tuple[int, ...]
    equality_matrices: tuple[np.ndarray, ...]
    equality_labels: tuple[tuple[int, int, int], ...] = field(default=())


def sprocedure_structure(n: int) -> SProcedureStructure:
    if n < 2:
        raise ValueError("S-procedure lifting constraints need n >= 2")
    ineq = tuple(zeta_index(i, i, n) for i in range(1, n + 1))
    mats, labels = [], []
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            for k in range(1, n + 1):
                e = np.zeros((n * n, n))
                e[zeta_index(j, k, n) - 1, i - 1] = 1.0
                e[zeta_index(i, k, n) - 1, j - 1] = -1.0
                e.setflags(write=False)
                mats.append(e)
                labels.append((i, j, k))
    return SProcedureStructure(n, ineq, tuple(mats), tuple(labels))


def verify_lift(sys: LtiSystem, lifted: LiftedSystem, x, u: float) -> float:
    """Residual between the chain-rule derivative of ``x ⊗ x`` and the lifted dynamics."""
    x = np.asarray(x, dtype=float).reshape(-1, 1)
    xdot = sys.a @ x + sys.b * u
    chain = np.kron(xdot, x) + np.kron(x, xdot)
    lifted_rate = lifted.a_lift @ np.kron(x, x) + lifted.b_lift @ (u * x)
    return float(np.linalg.norm(chain - lifted_rate))
