from pydantic import BaseModel, Field
from typing import Optional, List, Dict

from simulation.cusim import SimMethod, DEFAULT_CU_TARGETS
from training.paramspace import FragmentPattern


class HealthCheck(BaseModel):
    status: str
    version: str
    timestamp: str


class SimulateRequest(BaseModel):
    profile: Optional[str] = None
    num_layers: Optional[int] = None
    num_params: Optional[float] = None
    step_time: Optional[float] = None
    method: SimMethod = SimMethod.STREAMING_OVERLAP
    bandwidth_gbits: float = Field(default=1.0, gt=0)
    link_latency: Optional[float] = None
    H: Optional[int] = None
    fragment_size: Optional[int] = None
    pattern: Optional[FragmentPattern] = None
    tau: Optional[int] = None
    bits_per_value: Optional[int] = None
    num_steps: Optional[int] = None


class SimulateResponse(BaseModel):
    method: str
    bandwidth_gbits: float
    cu: float
    makespan_s: float
    bytes_total: float


class SweepRequest(SimulateRequest):
    methods: List[SimMethod] = Field(default_factory=lambda: list(SimMethod))
    bandwidths: Optional[List[float]] = None
    targets: List[float] = Field(default_factory=lambda: list(DEFAULT_CU_TARGETS))


class SweepResponse(BaseModel):
    rows: List[SimulateResponse]
    targets: Dict[str, Dict[str, Optional[float]]]


class MemoryRequest(BaseModel):
    num_params: float = Field(gt=0)
    num_layers: int = Field(ge=1)
    fragment_size: int = Field(ge=1)


class CalendarRequest(BaseModel):
    num_blocks: int = Field(ge=1)
    fragment_size: int = Field(ge=1)
    pattern: FragmentPattern = FragmentPattern.STRIDED
    T: int = Field(ge=1)
    H: int = Field(ge=1)
    taus: List[int] = Field(default_factory=lambda: [0])
