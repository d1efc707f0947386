"""Exception hierarchy. The CLI maps each family to its own exit code."""


class QndError(Exception):
    """Base class for all package errors."""


class ConfigError(QndError, ValueError):
    """Invalid parameters, grids, bands or config files."""


class NumericError(QndError, ArithmeticError):
    """NaN/inf fields, degenerate statistics, failed searches."""


class PropagationError(NumericError):
    """Raised when the split-step integrator leaves its validity domain."""

    def __init__(self, message, xi=None):
        super().__init__(message)
        self.xi = xi


class MeasurementError(NumericError):
    """A spectral moment or band measurement is undefined."""


class TuningError(NumericError):
    """The collision-centre search found no interior maximum."""


class EnsembleError(NumericError):
    """A Monte Carlo realization failed; carries the realization index."""

    def __init__(self, message, index):
        super().__init__(f"realization {index}: {message}")
        self.index = index


class OutputError(QndError, OSError):
    """Output directory cannot be created or written."""
