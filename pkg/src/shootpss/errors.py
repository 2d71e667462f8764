"""Exception hierarchy shared by all simulator modules."""

from __future__ import annotations


class PssError(Exception):
    """Base class for every error raised by the simulator."""


class NetlistSyntaxError(PssError):
    """Malformed netlist statement."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        super().__init__(f"{line}:{column}: {message}" if line else message)


class ValidationError(PssError):
    """Well-formed input that violates a circuit or analysis invariant."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        super().__init__(f"{line}:{column}: {message}" if line else message)


class ModelEvalError(PssError):
    """A device model produced a non-finite value."""


class SingularMatrix(PssError):
    """A linear system could not be factored."""


class NoConvergence(PssError):
    """DC operating point search exhausted all homotopy strategies."""


class StepNoConvergence(PssError):
    """Per-step Newton iteration of the transient integrator failed."""

    def __init__(self, message: str, time: float):
        self.time = time
        super().__init__(f"{message} (t={time:.6g} s)")


class MaxIterationsExceeded(PssError):
    """Shooting Newton loop hit MaxItr; ``result`` holds the partial run."""

    def __init__(self, message: str, result=None):
        self.result = result
        super().__init__(message)


class SingularJacobian(PssError):
    """The shooting Jacobian could not be factored."""


class DegenerateOscillation(PssError):
    """The circuit settled to its equilibrium instead of oscillating."""


class UnknownNode(PssError):
    """A referenced node does not exist in the circuit."""


class InsufficientHistory(PssError):
    """Too few convergence-zone points to estimate an order."""


class DatasetIOError(PssError, OSError):
    """A dataset file could not be written or read."""
