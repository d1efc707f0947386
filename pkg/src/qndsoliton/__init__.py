"""Soliton-collision QND measurement simulator."""

__version__ = "0.1.0"

from .errors import (ConfigError, EnsembleError, MeasurementError, NumericError,  # noqa: E402
                     PropagationError, QndError, TuningError)
from .units import Grid, PhysicalMap, make_grid  # noqa: E402
from .field import Band, Envelope  # noqa: E402

__all__ = ["__version__", "Band", "ConfigError", "EnsembleError", "Envelope", "Grid",
           "MeasurementError", "NumericError", "PhysicalMap", "PropagationError",
           "QndError", "TuningError", "make_grid"]
