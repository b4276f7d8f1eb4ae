"""
Built-in hardware/model profiles for the simulator, shipped as JSON under
configs/profiles (one file per profile, file stem = profile name).
"""

import json
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from core.errors import ConfigurationError
from core.settings import get_settings
from training.paramspace import FragmentPattern
from .cusim import SimConfig, SimMethod


class ModelProfile(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str
    description: str = ""
    num_layers: int = Field(ge=1)
    num_params: float = Field(gt=0)
    step_time: float = Field(gt=0)
    H: int = Field(default=100, ge=1)
    fragment_size: int = Field(default=3, ge=1)
    tau: int = Field(default=1, ge=0)
    pattern: FragmentPattern = FragmentPattern.STRIDED
    num_steps: int = Field(default=200, ge=1)

    def sim_config(self, method=SimMethod.STREAMING_OVERLAP, **overrides) -> SimConfig:
        fields = {
            "num_layers": self.num_layers,
            "num_params": self.num_params,
            "step_time": self.step_time,
            "H": self.H,
            "fragment_size": self.fragment_size,
            "tau": self.tau,
            "pattern": self.pattern,
            "num_steps": self.num_steps,
            "method": method,
        }
        fields.update({k: v for k, v in overrides.items() if v is not None})
        return SimConfig(**fields)


def _profiles_dir(profiles_dir: Optional[Path]) -> Path:
    return Path(profiles_dir) if profiles_dir is not None else get_settings().profiles_dir


def list_profiles(profiles_dir: Optional[Path] = None) -> List[str]:
    directory = _profiles_dir(profiles_dir)
    if not directory.is_dir():
        return []
    return sorted(p.stem for p in directory.glob("*.json"))


def load_profile(name: str, profiles_dir: Optional[Path] = None) -> ModelProfile:
    directory = _profiles_dir(profiles_dir)
    path = directory / f"{name}.json"
    if not path.is_file():
        valid = ", ".join(list_profiles(directory)) or "none found"
        raise ConfigurationError(f"unknown profile {name!r}; valid profiles: {valid}")
    try:
        return ModelProfile(**json.loads(path.read_text()))
    except (ValidationError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"profile {path.name} is invalid: {exc}") from exc


def load_all_profiles(profiles_dir: Optional[Path] = None) -> Dict[str, ModelProfile]:
    return {name: load_profile(name, profiles_dir) for name in list_profiles(profiles_dir)}
