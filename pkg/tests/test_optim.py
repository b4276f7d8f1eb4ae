import numpy as np
import pytest

from core.errors import NumericalError, StructuralError
from training.optim import (
    AdamHyperParams,
    AdamState,
    NesterovHyperParams,
    NesterovState,
    adamw_step,
    nesterov_direction,
    nesterov_step,
)


def test_first_adam_step_moves_by_lr_times_sign():
    params = np.array([1.0, -2.0, 0.5])
    grads = np.array([0.3, -4.0, 1e-3])
    hp = AdamHyperParams(lr=0.01, eps=1e-12)
    new, state = adamw_step(params, grads, AdamState.zeros(3, dtype=np.float64), hp)
    np.testing.assert_allclose(new, params - 0.01 * np.sign(grads), rtol=1e-9)
    assert state.t == 1
    np.testing.assert_allclose(state.m, 0.1 * grads)
    np.testing.assert_allclose(state.v, 0.01 * grads * grads)


def test_weight_decay_is_decoupled():
    params = np.array([2.0, -1.0])
    hp = AdamHyperParams(lr=0.1, weight_decay=0.5)
    new, _ = adamw_step(params, np.zeros(2), AdamState.zeros(2, dtype=np.float64), hp)
    np.testing.assert_allclose(new, params * (1 - 0.1 * 0.5))


def test_masked_entries_keep_params_and_moments():
    params = np.array([1.0, 1.0, 1.0])
    state = AdamState(np.array([0.1, 0.2, 0.3]), np.array([0.01, 0.02, 0.03]), 4)
    mask = np.array([True, False, True])
    new, new_state = adamw_step(params, np.ones(3), state, AdamHyperParams(), trainable=mask)
    assert new[1] == 1.0
    assert new_state.m[1] == 0.2 and new_state.v[1] == 0.02
    assert new[0] < 1.0 and new[2] < 1.0


def test_adam_keeps_float32():
    params = np.ones(4, dtype=np.float32)
    new, state = adamw_step(params, np.ones(4, dtype=np.float32), AdamState.zeros(4), AdamHyperParams())
    assert new.dtype == np.float32
    assert state.m.dtype == np.float32


def test_non_finite_gradient_raises_with_step():
    grads = np.array([0.0, np.nan])
    with pytest.raises(NumericalError) as info:
        adamw_step(np.zeros(2), grads, AdamState.zeros(2, dtype=np.float64), AdamHyperParams(), step=12)
    assert info.value.step == 12


def test_adam_shape_mismatch():
    with pytest.raises(StructuralError):
        adamw_step(np.zeros(2), np.zeros(3), AdamState.zeros(2), AdamHyperParams())


def test_nesterov_worked_example():
    new, state = nesterov_step(
        np.array([1.0]), np.array([0.5]), NesterovState.zeros(1, dtype=np.float64),
        NesterovHyperParams(outer_lr=0.4, momentum=0.9),
    )
    # v' = 0.5, update = 0.5 + 0.9 * 0.5
    assert state.v[0] == pytest.approx(0.5)
    assert new[0] == pytest.approx(1.0 - 0.4 * 0.95)


def test_nesterov_with_unit_lr_and_no_momentum_lands_on_local_params():
    base = np.array([0.3, -0.7, 2.0])
    local = np.array([0.1, -0.2, 2.5])
    new, _ = nesterov_step(base, base - local, NesterovState.zeros(3, dtype=np.float64),
                           NesterovHyperParams(outer_lr=1.0, momentum=0.0))
    np.testing.assert_allclose(new, local, atol=1e-12)


def test_nesterov_momentum_accumulates():
    hp = NesterovHyperParams(momentum=0.5)
    state = NesterovState.zeros(1, dtype=np.float64)
    _, state = nesterov_direction(np.array([1.0]), state, hp)
    direction, state = nesterov_direction(np.array([1.0]), state, hp)
    assert state.v[0] == pytest.approx(1.5)
    assert direction[0] == pytest.approx(1.0 + 0.5 * 1.5)


def test_nesterov_length_mismatch():
    with pytest.raises(StructuralError):
        nesterov_step(np.zeros(3), np.zeros(2), NesterovState.zeros(2), NesterovHyperParams())
