"""Exception taxonomy shared across the package."""


class SdegraphError(Exception):
    """Base class for all package errors."""


class DimensionError(SdegraphError):
    """Array shapes do not conform to the operation's contract."""


class DomainError(SdegraphError):
    """Mathematical domain violation (log of non-positive, division by zero, ...)."""


class ContractError(SdegraphError):
    """An API precondition was violated by the caller."""


class DivergenceError(SdegraphError):
    """Simulation produced a non-finite state."""

    def __init__(self, message, step=None, rows=None):
        super().__init__(message)
        self.step = step
        self.rows = rows


class ResolutionError(SdegraphError):
    """Observation times cannot be resolved onto the solver grid."""


class TrainingError(SdegraphError):
    """Training aborted; carries the offending parameter path or series ids."""

    def __init__(self, message, param=None, series=None):
        super().__init__(message)
        self.param = param
        self.series = series


class ParseError(SdegraphError):
    """Malformed external file; carries the 1-based line number."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class MetricError(SdegraphError):
    """Metric is undefined for the given inputs (degenerate truth, ...)."""


class InterventionError(SdegraphError):
    """Intervention map failed validation (non-idempotent, bad window, ...)."""


class ValidationError(SdegraphError):
    """Run configuration or input data failed validation."""
