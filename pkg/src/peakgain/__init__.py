"""Peak-to-peak gain bounds for SISO LTI systems from inescapable ellipsoids."""

from .linalg import NumericalError, NotPositiveDefiniteError
from .model import LiftedSystem, LtiSystem, UnstableSystemError, lift, load_system, sprocedure_structure
from .oracle import L1Estimate, WorstCaseRun, default_control_matrix, l1_exact, worst_case
from .sdp import SdpProblem, SdpSolution, solve
from .starnorm import SweepError, SweepResult, ellipsoid_boundary, star_norm, sweep
from .tailsplit import TailSplitResult, shifted_system, tail_split

__version__ = "0.1.0"

__all__ = [
    "L1Estimate", "LiftedSystem", "LtiSystem", "NotPositiveDefiniteError", "NumericalError",
    "SdpProblem", "SdpSolution", "SweepError", "SweepResult", "TailSplitResult",
    "UnstableSystemError", "WorstCaseRun", "default_control_matrix", "ellipsoid_boundary",
    "l1_exact", "lift", "load_system", "shifted_system", "solve", "sprocedure_structure",
    "star_norm", "sweep", "tail_split", "worst_case",
]
