"""Split the gain integral at ``T0``: exact head, star-norm bound on the tail.

``∫_0^∞ |h| = ∫_0^{T0} |h| + ∫_0^∞ |C e^{At} (e^{A T0} B)| dt``, and the
second term is the gain of the same system with input matrix ``e^{A T0} B``,
which any star norm bounds from above.
"""

from __future__ import annotations

from dataclasses import dataclass

from .linalg import expm
from .model import LtiSystem
from .oracle import ImpulseResponse, integrate_abs
from .starnorm import SweepResult, sweep

HEAD_TOLERANCE = 1e-9


@dataclass
class TailSplitResult:
    t0: float
    head: float
    tail_bound: float
    total: float
    degree: int
    head_error: float = 0.0
    sweep: SweepResult | None = None


def shifted_system(sys: LtiSystem, t0: float) -> LtiSystem:
    """Same ``A`` and ``C``; input matrix ``expm(A t0) B``."""
    if not t0 > 0:
        raise ValueError("t0 must be positive")
    return LtiSystem(sys.a, expm(sys.a * t0) @ sys.b, sys.c, f"{sys.name}@{t0:g}" if sys.name else "")


def tail_split(sys: LtiSystem, t0: float, degree: int = 2, quad_tolerance: float = HEAD_TOLERANCE,
               **sweep_options) -> TailSplitResult:
    """Upper bound on the gain from quadrature on ``[0, t0]`` plus a tail star norm.

    ``quad_tolerance`` is the absolute error budget of the head integral.
    """
    if not quad_tolerance > 0:
        raise ValueError("quad_tolerance must be positive")
    shifted = shifted_system(sys, t0)
    head, err, _ = integrate_abs(ImpulseResponse(sys), t0, quad_tolerance)
    tail = sweep(shifted, degree, **sweep_options)
    return TailSplitResult(t0, head, tail.star_norm, head + tail.star_norm, degree, err, tail)
