"""
Run configuration files: one JSON document with a top-level key per command.

    {"train": {...}}      -> TrainConfig
    {"simulate": {...}}   -> SimulateConfig
    {"sweep": {...}}      -> SweepConfig
    {"memory": {...}}     -> MemoryConfig
"""

import json
from pathlib import Path
from typing import List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from core.errors import ConfigurationError
from simulation.cusim import DEFAULT_CU_TARGETS, SimConfig, SimMethod
from simulation.profiles import load_profile
from training.config import TrainConfig
from training.paramspace import FragmentPattern


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SimulateConfig(StrictModel):
    """A built-in profile, explicit model sizes, or a profile with overrides."""

    profile: Optional[str] = None
    num_layers: Optional[int] = Field(default=None, ge=1)
    num_params: Optional[float] = Field(default=None, gt=0)
    step_time: Optional[float] = Field(default=None, gt=0)
    method: SimMethod = SimMethod.STREAMING_OVERLAP
    bandwidth_gbits: float = Field(default=1.0, gt=0)
    link_latency: Optional[float] = Field(default=None, ge=0)
    H: Optional[int] = Field(default=None, ge=1)
    fragment_size: Optional[int] = Field(default=None, ge=1)
    pattern: Optional[FragmentPattern] = None
    tau: Optional[int] = Field(default=None, ge=0)
    bits_per_value: Optional[int] = Field(default=None, ge=1, le=32)
    num_steps: Optional[int] = Field(default=None, ge=1)

    def resolve(self, **overrides) -> SimConfig:
        profile = overrides.pop("profile", None) or self.profile
        fields = self.model_dump(include=set(SimulateConfig.model_fields) - {"profile"})
        fields.update({k: v for k, v in overrides.items() if v is not None})
        fields = {k: v for k, v in fields.items() if v is not None}
        try:
            if profile is not None:
                base = load_profile(profile)
                method = fields.pop("method", SimMethod.STREAMING_OVERLAP)
                return base.sim_config(method, **fields)
            missing = [k for k in ("num_layers", "num_params", "step_time") if k not in fields]
            if missing:
                raise ConfigurationError(
                    "simulate needs a profile or explicit model sizes; missing "
                    + ", ".join(f"simulate.{k}" for k in missing)
                )
            return SimConfig(**fields)
        except ValidationError as exc:
            raise ConfigurationError(format_validation_error(exc, prefix="simulate")) from exc


class SweepConfig(SimulateConfig):
    methods: Union[str, List[SimMethod]] = "all"
    bandwidths: Optional[List[float]] = None
    targets: List[float] = list(DEFAULT_CU_TARGETS)
    step_times: Optional[List[float]] = None

    @field_validator("methods")
    @classmethod
    def _methods(cls, value):
        if isinstance(value, str):
            if value == "all":
                return value
            return [SimMethod(v.strip()) for v in value.split(",") if v.strip()]
        return value

    @field_validator("bandwidths")
    @classmethod
    def _bandwidths(cls, value):
        if value is not None:
            if not value:
                raise ValueError("bandwidth grid is empty")
            if any(b <= 0 for b in value):
                raise ValueError("bandwidths must be positive")
        return value

    @field_validator("targets")
    @classmethod
    def _targets(cls, value):
        if any(not 0.0 < t <= 1.0 for t in value):
            raise ValueError("CU targets must lie in (0, 1]")
        return value

    def method_list(self) -> List[SimMethod]:
        if self.methods == "all":
            return list(SimMethod)
        return list(self.methods)


class MemoryConfig(StrictModel):
    num_params: float = Field(gt=0)
    num_layers: int = Field(ge=1)
    fragment_size: int = Field(ge=1)


class RunConfig(StrictModel):
    train: Optional[TrainConfig] = None
    simulate: Optional[SimulateConfig] = None
    sweep: Optional[SweepConfig] = None
    memory: Optional[MemoryConfig] = None


def format_validation_error(exc: ValidationError, prefix: Optional[str] = None) -> str:
    """One line per problem, each starting with the dotted field path."""
    lines = []
    for err in exc.errors():
        loc = [str(part) for part in err.get("loc", ())]
        if prefix and (not loc or loc[0] != prefix):
            loc.insert(0, prefix)
        path = ".".join(loc) or "<root>"
        lines.append(f"{path}: {err.get('msg', 'invalid value')}")
    return "; ".join(lines)


def parse_run_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("configuration must be a JSON object")
    try:
        return RunConfig(**data)
    except ValidationError as exc:
        raise ConfigurationError(format_validation_error(exc)) from exc


def load_run_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file {path} does not exist") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    return parse_run_config(data)


def require_section(config: RunConfig, name: str):
    section = getattr(config, name)
    if section is None:
        raise ConfigurationError(f"config has no {name!r} section", field=name)
    return section
