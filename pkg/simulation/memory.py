"""
Memory cost of keeping outer state for one fragment at a time.

Inner state: parameters, Adam first and second moments (3 copies, FP32).
Outer state: outer parameters and outer momentum (2 copies, FP32) for one
fragment of fragment_size / L of the model.
"""

from pydantic import BaseModel

from core.errors import ConfigurationError

GIB = 1024 ** 3
FP32_BYTES = 4


class MemoryReport(BaseModel):
    num_params: float
    num_layers: int
    fragment_size: int
    inner_bytes: float
    outer_fragment_bytes: float
    overhead_fraction: float

    @property
    def inner_gib(self) -> float:
        return self.inner_bytes / GIB

    @property
    def outer_fragment_gib(self) -> float:
        return self.outer_fragment_bytes / GIB

    def to_dict(self) -> dict:
        return {
            **self.model_dump(),
            "inner_gib": round(self.inner_gib, 2),
            "outer_fragment_gib": round(self.outer_fragment_gib, 2),
            "overhead_percent": round(100 * self.overhead_fraction, 2),
        }


def memory_overhead(num_params: float, num_layers: int, fragment_size: int) -> MemoryReport:
    if num_params <= 0 or num_layers < 1 or fragment_size < 1:
        raise ConfigurationError(
            f"num_params ({num_params}), layers ({num_layers}) and fragment_size "
            f"({fragment_size}) must be positive"
        )
    if fragment_size > num_layers:
        raise ConfigurationError(
            f"fragment_size {fragment_size} exceeds the number of layers {num_layers}"
        )
    inner = num_params * 3 * FP32_BYTES
    outer = num_params * 2 * FP32_BYTES * fragment_size / num_layers
    return MemoryReport(
        num_params=num_params,
        num_layers=num_layers,
        fragment_size=fragment_size,
        inner_bytes=inner,
        outer_fragment_bytes=outer,
        overhead_fraction=outer / inner,
    )
