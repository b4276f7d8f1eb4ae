"""Shared fixtures. The project root is on sys.path because this file lives there."""

import pytest

from core.settings import get_settings
from training.config import TrainConfig


@pytest.fixture(autouse=True)
def _fresh_settings(monkeypatch):
    monkeypatch.setenv("STREAMLAB_LOG_LEVEL", "WARNING")
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def small_train_config():
    """Factory for quick TrainConfigs on a 6-block network."""

    def make(**overrides) -> TrainConfig:
        fields = {
            "mode": "streaming_overlapped",
            "M": 2,
            "T": 120,
            "H": 30,
            "fragment_size": 3,
            "seed": 5,
            "model": {"d_in": 4, "d_hidden": 8, "d_out": 2, "num_blocks": 6},
            "task": {"batch_size": 16},
            "inner": {"lr": 0.003},
            "eval": {"interval": 30},
        }
        for key, value in overrides.items():
            if isinstance(value, dict) and isinstance(fields.get(key), dict):
                fields[key] = {**fields[key], **value}
            else:
                fields[key] = value
        return TrainConfig(**fields)

    return make
