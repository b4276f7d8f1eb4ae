"""
Process-wide settings read from the environment (prefix STREAMLAB_) or .env
"""

from functools import lru_cache
from pathlib import Path
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

PROJECT_ROOT = Path(__file__).resolve().parent.parent


class LabSettings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="STREAMLAB_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    log_level: str = "INFO"
    log_format: Literal["json", "console"] = "json"
    worker_threads: int = Field(default=1, ge=1)
    profiles_dir: Path = PROJECT_ROOT / "configs" / "profiles"
    output_dir: Path = Path("runs")


@lru_cache(maxsize=1)
def get_settings() -> LabSettings:
    return LabSettings()
