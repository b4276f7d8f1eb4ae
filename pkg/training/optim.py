"""
INNER / OUTER OPTIMIZERS
AdamW for the inner steps, SGD with Nesterov momentum for the outer steps.
Both are pure state transitions: the caller owns the state.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from core.errors import NumericalError, StructuralError


@dataclass(frozen=True)
class AdamHyperParams:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    weight_decay: float = 0.0


@dataclass(frozen=True)
class NesterovHyperParams:
    outer_lr: float = 0.4
    momentum: float = 0.9


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int, dtype=np.float32) -> "AdamState":
        return cls(np.zeros(n, dtype=dtype), np.zeros(n, dtype=dtype), 0)

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.t)


@dataclass
class NesterovState:
    v: np.ndarray

    @classmethod
    def zeros(cls, n: int, dtype=np.float32) -> "NesterovState":
        return cls(np.zeros(n, dtype=dtype))


def adamw_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamState,
    hp: AdamHyperParams,
    trainable: Optional[np.ndarray] = None,
    step: Optional[int] = None,
) -> Tuple[np.ndarray, AdamState]:
    """One decoupled-weight-decay Adam step.

    ``trainable`` is an optional boolean mask; masked-out entries keep their
    moments and only receive weight decay.
    """
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise StructuralError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}"
        )
    if not np.all(np.isfinite(grads)):
        bad = int(np.flatnonzero(~np.isfinite(grads))[0])
        raise NumericalError(
            f"non-finite gradient entry at index {bad}",
            step=state.t + 1 if step is None else step,
        )

    dtype = params.dtype
    b1 = dtype.type(hp.beta1)
    b2 = dtype.type(hp.beta2)
    t = state.t + 1

    if trainable is None:
        m = b1 * state.m + (1 - b1) * grads
        v = b2 * state.v + (1 - b2) * (grads * grads)
    else:
        m = np.where(trainable, b1 * state.m + (1 - b1) * grads, state.m)
        v = np.where(trainable, b2 * state.v + (1 - b2) * (grads * grads), state.v)

    bc1 = dtype.type(1.0 - hp.beta1 ** t)
    bc2 = dtype.type(1.0 - hp.beta2 ** t)
    direction = (m / bc1) / (np.sqrt(v / bc2) + dtype.type(hp.eps))
    if trainable is not None:
        direction = np.where(trainable, direction, dtype.type(0))
    if hp.weight_decay:
        direction = direction + dtype.type(hp.weight_decay) * params

    new_params = params - dtype.type(hp.lr) * direction
    return new_params.astype(dtype, copy=False), AdamState(m, v, t)


def nesterov_direction(
    delta: np.ndarray, state: NesterovState, hp: NesterovHyperParams
) -> Tuple[np.ndarray, NesterovState]:
    """Advance momentum once and return the update direction delta + mu * v'."""
    if delta.shape != state.v.shape:
        raise StructuralError(
            f"outer gradient length {delta.size} != momentum length {state.v.size}"
        )
    mu = delta.dtype.type(hp.momentum)
    v = mu * state.v + delta
    return delta + mu * v, NesterovState(v)


def apply_outer(base: np.ndarray, direction: np.ndarray, hp: NesterovHyperParams) -> np.ndarray:
    if base.shape != direction.shape:
        raise StructuralError(f"outer base length {base.size} != update length {direction.size}")
    return base - base.dtype.type(hp.outer_lr) * direction


def nesterov_step(
    outer_base: np.ndarray,
    delta: np.ndarray,
    state: NesterovState,
    hp: NesterovHyperParams,
) -> Tuple[np.ndarray, NesterovState]:
    """new = base - lr * (delta + mu * v'), v' = mu * v + delta.

    ``delta`` is the averaged outer gradient theta_old - theta_new, hence the minus.
    """
    if outer_base.shape != delta.shape:
        raise StructuralError(f"outer base length {outer_base.size} != delta length {delta.size}")
    direction, new_state = nesterov_direction(delta, state, hp)
    return apply_outer(outer_base, direction, hp), new_state
