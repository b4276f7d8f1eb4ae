from .errors import (
    LabError,
    ConfigurationError,
    StructuralError,
    CodecError,
    SchedulingError,
    NumericalError,
    SimulationError,
)
from .logger import get_logger, PerformanceLogger
from .settings import LabSettings, get_settings

__all__ = [
    "LabError",
    "ConfigurationError",
    "StructuralError",
    "CodecError",
    "SchedulingError",
    "NumericalError",
    "SimulationError",
    "get_logger",
    "PerformanceLogger",
    "LabSettings",
    "get_settings",
]
