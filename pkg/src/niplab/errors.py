"""Exception hierarchy for numerical and configuration failures."""

from __future__ import annotations


class NipError(Exception):
    """Base class for every error raised by niplab."""


class DimensionMismatch(NipError, ValueError):
    pass


class NonHermitianInput(NipError, ValueError):
    pass


class NotPositiveDefinite(NipError, ValueError):
    pass


class NotUnitary(NipError, ValueError):
    pass


class SingularMatrix(NipError, ValueError):
    pass


class DefectiveMatrix(NipError, ValueError):
    pass


class DegenerateSpectrum(NipError, ValueError):
    pass


class ConvergenceFailure(NipError, RuntimeError):
    pass


class RankDeficient(NipError, ValueError):
    pass


class NonFiniteState(NipError, FloatingPointError):
    """A propagated quantity acquired NaN/Inf entries."""

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message)
        self.t = t


class BasisDegenerated(NipError, RuntimeError):
    """Bi-orthonormality or completeness of a propagated basis was lost."""

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message)
        self.t = t


class MetricDegenerated(NipError, RuntimeError):
    """The metric (or the operator it is built from) lost positivity.

    ``t`` holds the first time at which the loss was detected.
    """

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message)
        self.t = t


class InsufficientSamples(NipError, ValueError):
    pass


class ConfigError(NipError, ValueError):
    """Invalid scenario configuration; ``field`` is the dotted path at fault."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
