"""Polyhedral Lyapunov function synthesis for hybrid linear systems."""

from .errors import (
    InfeasiblePolytopeError,
    InvalidConstraintError,
    MalformedInputError,
    NumericalFailureError,
    ParseError,
    PolylyapError,
    SimulationStuckError,
    UndecodableCandidateError,
)
from .lpcore import (
    DEFAULT_SETTINGS,
    LinearProgram,
    LpOutcome,
    LpStatus,
    Polytope,
    SolverSettings,
    chebyshev_center,
    solve_lp,
)

__version__ = "0.1.0"
