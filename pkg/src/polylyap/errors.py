"""Exception types shared across the package."""


class PolylyapError(Exception):
    """Base class for every error raised by this package."""


class MalformedInputError(PolylyapError):
    """Input violates a structural precondition (dimension mismatch, bad bounds)."""


class NumericalFailureError(PolylyapError):
    """The numerical kernel gave up (pivot cap hit, spurious feasibility)."""


class InfeasiblePolytopeError(PolylyapError):
    """A polytope that was expected to be nonempty is empty."""


class ParseError(PolylyapError):
    """An input file could not be parsed; the message carries the location."""


class SimulationStuckError(PolylyapError):
    """No mode is active at the current simulation state."""


class InvalidConstraintError(PolylyapError):
    """A constraint triple cannot be expanded into rows."""


class UndecodableCandidateError(PolylyapError):
    """A gadget candidate has a zero coefficient where a sign is required."""
