"""
Training run configuration (validated with pydantic before any work starts)
"""

from enum import Enum
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .paramspace import FragmentPattern


class TrainMode(str, Enum):
    DATA_PARALLEL = "data_parallel"
    DILOCO = "diloco"
    STREAMING = "streaming"
    STREAMING_OVERLAPPED = "streaming_overlapped"
    STREAMING_OVERLAPPED_QUANTIZED = "streaming_overlapped_quantized"


class EvalMode(str, Enum):
    FIRST_REPLICA = "first_replica"
    REPLICA_AVERAGE = "replica_average"
    OUTER_PARAMS = "outer_params"


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelConfig(StrictModel):
    d_in: int = Field(default=8, ge=1)
    d_hidden: int = Field(default=32, ge=1)
    d_out: int = Field(default=4, ge=1)
    num_blocks: int = Field(default=12, ge=1)


class TaskConfig(StrictModel):
    batch_size: int = Field(default=32, ge=1)
    noise_std: float = Field(default=0.0, ge=0.0)
    eval_size: int = Field(default=512, ge=1)
    identical_shards: bool = False


class CodecConfig(StrictModel):
    kind: Optional[Literal["fp32", "e3m0", "topk", "random_drop"]] = None
    keep_fraction: float = Field(default=0.1, gt=0.0, le=1.0)
    drop_prob: float = Field(default=0.5, ge=0.0, lt=1.0)
    rescale: bool = True


class InnerOptimizerConfig(StrictModel):
    lr: float = Field(default=1e-3, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.99, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)
    weight_decay: float = Field(default=0.0, ge=0.0)


class OuterOptimizerConfig(StrictModel):
    outer_lr: float = Field(default=0.4, gt=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)


class EvalConfig(StrictModel):
    interval: int = Field(default=100, ge=1)
    mode: EvalMode = EvalMode.OUTER_PARAMS


class TrainConfig(StrictModel):
    mode: TrainMode = TrainMode.STREAMING_OVERLAPPED
    M: int = Field(ge=1)
    T: int = Field(ge=1)
    H: int = Field(ge=1)
    fragment_size: int = Field(default=3, ge=1)
    pattern: FragmentPattern = FragmentPattern.STRIDED
    taus: Union[int, List[int]] = 1
    alpha: float = Field(default=0.5, ge=0.0, le=1.0)
    seed: int = 0
    precision: Literal["float32", "float64"] = "float32"
    freeze_fedpart: bool = False
    worker_threads: Optional[int] = Field(default=None, ge=1)
    model: ModelConfig = ModelConfig()
    task: TaskConfig = TaskConfig()
    codec: CodecConfig = CodecConfig()
    inner: InnerOptimizerConfig = InnerOptimizerConfig()
    outer: OuterOptimizerConfig = OuterOptimizerConfig()
    eval: EvalConfig = EvalConfig()

    @model_validator(mode="after")
    def _check_protocol(self):
        L = self.model.num_blocks
        if isinstance(self.taus, list):
            if len(self.taus) != self.M:
                raise ValueError(f"taus has {len(self.taus)} entries but M={self.M}")
            taus = self.taus
        else:
            taus = [self.taus]
        for tau in taus:
            if tau < 0 or tau >= self.H:
                raise ValueError(f"overlap delay {tau} violates 0 <= tau < H (H={self.H})")
        if self.mode in (TrainMode.DATA_PARALLEL, TrainMode.DILOCO):
            return self
        if L % self.fragment_size:
            raise ValueError(f"fragment_size {self.fragment_size} does not divide num_blocks {L}")
        if self.H < L // self.fragment_size:
            raise ValueError(f"H ({self.H}) must be >= number of fragments ({L // self.fragment_size})")
        return self

    # ------------------------------------------------------- derived settings

    @property
    def effective_fragment_size(self) -> int:
        if self.mode in (TrainMode.DILOCO, TrainMode.DATA_PARALLEL):
            return self.model.num_blocks
        return self.fragment_size

    @property
    def effective_taus(self) -> List[int]:
        if self.mode in (TrainMode.DILOCO, TrainMode.STREAMING, TrainMode.DATA_PARALLEL):
            return [0] * self.M
        if isinstance(self.taus, list):
            return list(self.taus)
        return [self.taus] * self.M

    @property
    def effective_codec(self) -> str:
        if self.codec.kind is not None:
            return self.codec.kind
        if self.mode is TrainMode.STREAMING_OVERLAPPED_QUANTIZED:
            return "e3m0"
        return "fp32"
