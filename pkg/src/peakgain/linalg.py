"""Dense real linear algebra used throughout the package.

Matrices are plain 2-D ``numpy`` float arrays. The helpers here add the
validation and failure reporting the rest of the package relies on.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

SYMMETRY_RTOL = 1e-10


class NumericalError(RuntimeError):
    """A numerical routine failed to produce a trustworthy result."""


class NotPositiveDefiniteError(NumericalError):
    """Cholesky factorization broke down.

    ``pivot`` is the 1-based index of the first non-positive pivot.
    """

    def __init__(self, pivot: int, size: int):
        super().__init__(f"matrix of size {size} is not positive definite "
                         f"(failed at pivot {pivot})")
        self.pivot = pivot
        self.size = size


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a finite 2-D float array (scalars become 1x1)."""
    m = np.array(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2 or m.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def _square(a, name="matrix") -> np.ndarray:
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    return m


def symmetrize(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def is_symmetric(a, rtol: float = SYMMETRY_RTOL) -> bool:
    a = np.asarray(a, dtype=float)
    scale = max(1.0, float(np.max(np.abs(a))))
    return bool(np.max(np.abs(a - a.T)) <= rtol * scale)


def kron(a, b) -> np.ndarray:
    """Kronecker product; block (i, j) of the result is ``a[i, j] * b``."""
    return np.kron(as_matrix(a, "a"), as_matrix(b, "b"))


def kron_power(a, d: int) -> np.ndarray:
    """``a ⊗ a ⊗ ... ⊗ a`` (d factors); ``d = 0`` gives ``[[1]]``."""
    if d < 0:
        raise ValueError("Kronecker power must be non-negative")
    a = as_matrix(a)
    if d == 0:
        return np.ones((1, 1))
    return reduce(np.kron, [a] * d)


def kron_sum(a, d: int) -> np.ndarray:
    """d-th Kronecker sum ``Σ_k I^{⊗(k-1)} ⊗ a ⊗ I^{⊗(d-k)}``.

    The identity factors take the row dimension of ``a``, so a non-square
    ``n x m`` input (an input matrix ``B``) yields an ``n^d x n^(d-1) m``
    result. That is the only non-square use in this package.
    """
    if d < 1:
        raise ValueError("Kronecker sum degree must be at least 1")
    a = as_matrix(a)
    eye = np.eye(a.shape[0])
    total = None
    for k in range(1, d + 1):
        term = np.kron(np.kron(kron_power(eye, k - 1), a), kron_power(eye, d - k))
        total = term if total is None else total + term
    return total


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray  # complex
    max_real_part: float

    def sorted(self) -> np.ndarray:
        return np.sort_complex(self.eigenvalues)


def eigenvalues(a) -> Spectrum:
    a = _square(a)
    try:
        lam = scipy.linalg.eigvals(a, check_finite=False)
    except np.linalg.LinAlgError as exc:  # QR iteration did not converge
        raise NumericalError(f"eigenvalue iteration failed for {a.shape[0]}x{a.shape[0]} matrix") from exc
    return Spectrum(lam.astype(complex), float(np.max(lam.real)))


def expm(a) -> np.ndarray:
    """Matrix exponential (scaling and squaring with Padé approximants)."""
    return scipy.linalg.expm(_square(a))


def cholesky(a) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == a``.

    ``a`` is symmetrized before factoring. Raises
    :class:`NotPositiveDefiniteError` carrying the failing pivot.
    """
    a = _square(a)
    if not is_symmetric(a):
        raise ValueError("cholesky requires a symmetric matrix")
    c, info = lapack.dpotrf(symmetrize(a), lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(int(info), a.shape[0])
    if info < 0:  # pragma: no cover - argument error inside LAPACK
        raise NumericalError(f"dpotrf argument error {info}")
    return c


def solve_spd(a, rhs) -> np.ndarray:
    """Solve ``a @ x = rhs`` for symmetric positive definite ``a``."""
    low = cholesky(a)
    rhs = np.asarray(rhs, dtype=float)
    return scipy.linalg.cho_solve((low, True), rhs, check_finite=False)
