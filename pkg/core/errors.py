"""
Error hierarchy shared by the training lab, the simulator and both surfaces.
"""

from typing import Any, Dict, Optional


class LabError(Exception):
    """Base class for every error raised on purpose by this project"""

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = {k: v for k, v in context.items() if v is not None}

    def __str__(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(f"{k}={v}" for k, v in self.context.items())
        return f"{self.message} ({details})"


class ConfigurationError(LabError):
    """Invalid sizes, ranges or combinations supplied by the caller"""


class StructuralError(LabError):
    """Shape or length mismatch between vectors, blocks or graphs"""


class CodecError(LabError):
    """Encoding or decoding of an outer-gradient payload failed"""

    def __init__(
        self,
        message: str,
        index: Optional[int] = None,
        replica: Optional[int] = None,
        non_finite: bool = False,
    ):
        super().__init__(message, index=index, replica=replica)
        self.index = index
        self.replica = replica
        self.non_finite = non_finite


class SchedulingError(LabError):
    """A synchronization event happened out of calendar order"""


class NumericalError(LabError):
    """Non-finite loss or gradient during training"""

    def __init__(
        self,
        message: str,
        step: Optional[int] = None,
        replica: Optional[int] = None,
        fragment: Optional[int] = None,
    ):
        super().__init__(message, step=step, replica=replica, fragment=fragment)
        self.step = step
        self.replica = replica
        self.fragment = fragment


class SimulationError(LabError):
    """The compute-utilization DAG cannot be simulated"""
