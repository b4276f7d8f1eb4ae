"""
Learning-outcome checks on the teacher-student task. Each run takes tens of
seconds to minutes, so they are skipped unless selected with ``-m slow``.
"""

import pytest

from cli.schema import load_run_config
from core.settings import PROJECT_ROOT
from training.engine import run_training

pytestmark = pytest.mark.slow

TRAIN_CONFIGS = PROJECT_ROOT / "configs" / "train"


def _final_loss(name: str, seed: int = 0) -> float:
    config = load_run_config(TRAIN_CONFIGS / f"{name}.json").train
    result = run_training(config.model_copy(update={"seed": seed}))
    return result.metrics.final_row().eval_loss_outer


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_streaming_matches_data_parallel(seed):
    streaming = _final_loss("acceptance_streaming", seed)
    data_parallel = _final_loss("acceptance_data_parallel", seed)
    assert abs(streaming - data_parallel) <= 0.05 * data_parallel


def test_four_bit_outer_gradients_are_neutral():
    fp32 = _final_loss("acceptance_fp32")
    e3m0 = _final_loss("acceptance_e3m0")
    random_drop = _final_loss("acceptance_random_drop")
    assert abs(e3m0 - fp32) <= 0.02 * fp32
    assert random_drop > e3m0


def test_freezing_non_synced_fragments_hurts():
    baseline = _final_loss("acceptance_streaming")
    frozen = _final_loss("acceptance_fedpart")
    assert frozen >= 1.05 * baseline
