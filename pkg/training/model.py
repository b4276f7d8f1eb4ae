"""
RESIDUAL NETWORK + TEACHER-STUDENT TASK
A small stack of tanh residual blocks with exact analytic backprop, and a
seeded synthetic regression task whose data shards play the role of the
replicas' private datasets.

    h_0 = W_in x
    h_l = h_{l-1} + tanh(W_l h_{l-1} + b_l)      l = 1..L
    y   = W_out h_L
"""

from dataclasses import dataclass
from functools import cached_property
from typing import List, NamedTuple, Tuple

import numpy as np

from core.errors import StructuralError
from core.seeds import sub_rng
from .paramspace import ParamVector


class Batch(NamedTuple):
    x: np.ndarray  # (B, d_in)
    y: np.ndarray  # (B, d_out)

    def __len__(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class ResidualNet:
    d_in: int
    d_hidden: int
    d_out: int
    num_blocks: int
    dtype: str = "float32"

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    @property
    def block_names(self) -> List[str]:
        return [f"block_{l}" for l in range(self.num_blocks)]

    @cached_property
    def layout(self) -> List[Tuple[str, int]]:
        dh = self.d_hidden
        return (
            [("W_in", dh * self.d_in)]
            + [(name, dh * dh + dh) for name in self.block_names]
            + [("W_out", self.d_out * dh)]
        )

    @property
    def num_params(self) -> int:
        dh = self.d_hidden
        return dh * self.d_in + self.num_blocks * (dh * dh + dh) + self.d_out * dh

    def zeros(self) -> ParamVector:
        return ParamVector.from_layout(self.layout, dtype=self.np_dtype)

    def init_params(self, rng: np.random.Generator) -> ParamVector:
        """Gaussian weights with std 1/sqrt(fan_in); zero biases."""
        params = self.zeros()
        dh = self.d_hidden
        params.block("W_in")[:] = rng.normal(0.0, 1.0 / np.sqrt(self.d_in), dh * self.d_in)
        for name in self.block_names:
            blk = params.block(name)
            blk[: dh * dh] = rng.normal(0.0, 1.0 / np.sqrt(dh), dh * dh)
            blk[dh * dh:] = 0.0
        params.block("W_out")[:] = rng.normal(0.0, 1.0 / np.sqrt(dh), self.d_out * dh)
        return params

    # ------------------------------------------------------------------ views

    def _check(self, params: ParamVector, batch: Batch) -> None:
        if len(params) != self.num_params:
            raise StructuralError(
                f"parameter vector has {len(params)} values, network needs {self.num_params}"
            )
        if len(batch) == 0:
            raise StructuralError("empty batch")
        if batch.x.shape[1:] != (self.d_in,) or batch.y.shape != (len(batch), self.d_out):
            raise StructuralError(
                f"batch shapes x{batch.x.shape} y{batch.y.shape} do not match "
                f"d_in={self.d_in}, d_out={self.d_out}"
            )

    def _weights(self, params: ParamVector):
        dh = self.d_hidden
        w_in = params.block("W_in").reshape(dh, self.d_in)
        blocks = []
        for name in self.block_names:
            blk = params.block(name)
            blocks.append((blk[: dh * dh].reshape(dh, dh), blk[dh * dh:]))
        w_out = params.block("W_out").reshape(self.d_out, dh)
        return w_in, blocks, w_out

    # ---------------------------------------------------------------- compute

    def predict(self, params: ParamVector, x: np.ndarray) -> np.ndarray:
        w_in, blocks, w_out = self._weights(params)
        h = x @ w_in.T
        for w, b in blocks:
            h = h + np.tanh(h @ w.T + b)
        return h @ w_out.T

    def forward_loss(self, params: ParamVector, batch: Batch) -> float:
        """Mean squared error over batch rows and output dimensions."""
        self._check(params, batch)
        x = batch.x.astype(params.dtype, copy=False)
        y = batch.y.astype(params.dtype, copy=False)
        err = self.predict(params, x) - y
        return float(np.mean(err * err))

    def loss_and_grad(self, params: ParamVector, batch: Batch) -> Tuple[float, ParamVector]:
        self._check(params, batch)
        dtype = params.dtype
        x = batch.x.astype(dtype, copy=False)
        y = batch.y.astype(dtype, copy=False)
        w_in, blocks, w_out = self._weights(params)

        hs = [x @ w_in.T]
        acts = []
        for w, b in blocks:
            a = np.tanh(hs[-1] @ w.T + b)
            acts.append(a)
            hs.append(hs[-1] + a)
        err = hs[-1] @ w_out.T - y
        loss = float(np.mean(err * err))

        grad = params.zeros_like()
        dh = self.d_hidden
        d_out = (2.0 / err.size) * err
        d_out = d_out.astype(dtype, copy=False)
        grad.block("W_out")[:] = (d_out.T @ hs[-1]).ravel()
        d_h = d_out @ w_out
        for l in range(self.num_blocks - 1, -1, -1):
            w, _ = blocks[l]
            a = acts[l]
            d_z = d_h * (1.0 - a * a)
            g = grad.block(self.block_names[l])
            g[: dh * dh] = (d_z.T @ hs[l]).ravel()
            g[dh * dh:] = d_z.sum(axis=0)
            d_h = d_h + d_z @ w
        grad.block("W_in")[:] = (d_h.T @ x).ravel()
        return loss, grad

    def backward(self, params: ParamVector, batch: Batch) -> ParamVector:
        return self.loss_and_grad(params, batch)[1]


@dataclass(frozen=True)
class SyntheticTask:
    """Teacher-student regression. Batches are pure functions of (seed, shard, step)."""

    net: ResidualNet
    seed: int
    batch_size: int
    noise_std: float = 0.0
    eval_size: int = 512

    @cached_property
    def teacher_params(self) -> ParamVector:
        return self.net.init_params(sub_rng(self.seed, "teacher"))

    def _sample(self, rng: np.random.Generator, n: int) -> Batch:
        x = rng.standard_normal((n, self.net.d_in)).astype(self.net.np_dtype)
        y = self.net.predict(self.teacher_params, x)
        if self.noise_std > 0.0:
            y = y + self.noise_std * rng.standard_normal(y.shape)
        return Batch(x, y.astype(self.net.np_dtype, copy=False))

    def batch(self, shard: int, step: int, multiplier: int = 1) -> Batch:
        return self._sample(sub_rng(self.seed, "shard", shard, step), self.batch_size * multiplier)

    @cached_property
    def eval_set(self) -> Batch:
        return self._sample(sub_rng(self.seed, "eval"), self.eval_size)

    def student_init(self) -> ParamVector:
        return self.net.init_params(sub_rng(self.seed, "init"))
