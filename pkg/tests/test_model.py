import math

import numpy as np
import pytest

from core.errors import StructuralError
from core.seeds import sub_rng
from training.model import Batch, ResidualNet, SyntheticTask


def _reference_loss(net, params, batch):
    """Scalar loops, no matrix products."""
    dh = net.d_hidden
    w_in = params.block("W_in")
    w_out = params.block("W_out")
    total = 0.0
    for row in range(len(batch)):
        x = batch.x[row]
        h = [sum(w_in[i * net.d_in + j] * x[j] for j in range(net.d_in)) for i in range(dh)]
        for name in net.block_names:
            blk = params.block(name)
            z = [
                sum(blk[i * dh + j] * h[j] for j in range(dh)) + blk[dh * dh + i]
                for i in range(dh)
            ]
            h = [h[i] + math.tanh(z[i]) for i in range(dh)]
        for k in range(net.d_out):
            y = sum(w_out[k * dh + j] * h[j] for j in range(dh))
            total += (y - batch.y[row, k]) ** 2
    return total / (len(batch) * net.d_out)


def test_forward_matches_scalar_reference():
    net = ResidualNet(4, 8, 2, 6, dtype="float64")
    task = SyntheticTask(net, seed=7, batch_size=16)
    params = task.student_init()
    batch = task.batch(0, 1)
    assert net.forward_loss(params, batch) == pytest.approx(
        _reference_loss(net, params, batch), rel=1e-10
    )


def test_teacher_is_a_fixed_point():
    net = ResidualNet(4, 8, 2, 3, dtype="float64")
    task = SyntheticTask(net, seed=1, batch_size=8, noise_std=0.0)
    assert net.forward_loss(task.teacher_params, task.eval_set) == 0.0


def test_output_head_scales_predictions():
    net = ResidualNet(3, 5, 2, 2, dtype="float64")
    params = net.zeros()
    params.block("W_in")[:] = sub_rng(0, "init").normal(size=params.block("W_in").size)
    params.block("W_out")[:] = 1.0
    x = sub_rng(0, "eval").normal(size=(4, 3))
    base = net.predict(params, x)
    params.block("W_out")[:] *= 2.0
    np.testing.assert_allclose(net.predict(params, x), 2.0 * base, rtol=1e-14)


def test_zero_blocks_leave_residual_stream_untouched():
    net = ResidualNet(3, 3, 3, 4, dtype="float64")
    params = net.zeros()
    params.block("W_in")[:] = np.eye(3).ravel()
    params.block("W_out")[:] = np.eye(3).ravel()
    x = np.array([[0.5, -1.0, 2.0]])
    np.testing.assert_array_equal(net.predict(params, x), x)


@pytest.mark.parametrize("seed,d_hidden,num_blocks", [
    (0, 4, 1),
    (1, 8, 3),
    (2, 16, 2),
    (3, 6, 8),
    (4, 12, 5),
])
def test_gradient_matches_central_differences(seed, d_hidden, num_blocks):
    net = ResidualNet(3, d_hidden, 2, num_blocks, dtype="float64")
    task = SyntheticTask(net, seed=seed, batch_size=6, noise_std=0.1)
    params = task.student_init()
    batch = task.batch(0, 1)
    _, grad = net.loss_and_grad(params, batch)

    rng = np.random.default_rng(seed)
    eps = 1e-5
    for i in rng.choice(len(params), size=min(40, len(params)), replace=False):
        plus, minus = params.copy(), params.copy()
        plus.data[i] += eps
        minus.data[i] -= eps
        numeric = (net.forward_loss(plus, batch) - net.forward_loss(minus, batch)) / (2 * eps)
        analytic = grad.data[i]
        assert abs(analytic - numeric) <= 1e-4 * max(abs(analytic), abs(numeric)) + 1e-6


def test_backward_is_loss_and_grad_gradient():
    net = ResidualNet(2, 4, 1, 2)
    task = SyntheticTask(net, seed=5, batch_size=4)
    params = task.student_init()
    batch = task.batch(1, 3)
    np.testing.assert_array_equal(net.backward(params, batch).data, net.loss_and_grad(params, batch)[1].data)


def test_shape_errors():
    net = ResidualNet(2, 4, 1, 2)
    params = net.zeros()
    with pytest.raises(StructuralError):
        net.forward_loss(params, Batch(np.zeros((0, 2)), np.zeros((0, 1))))
    with pytest.raises(StructuralError):
        net.forward_loss(params, Batch(np.zeros((3, 5)), np.zeros((3, 1))))
    other = ResidualNet(2, 4, 1, 3).zeros()
    with pytest.raises(StructuralError):
        net.loss_and_grad(other, Batch(np.zeros((3, 2)), np.zeros((3, 1))))


def test_batches_are_pure_functions_of_seed_shard_step():
    net = ResidualNet(4, 8, 2, 2)
    a = SyntheticTask(net, seed=9, batch_size=8)
    b = SyntheticTask(net, seed=9, batch_size=8)
    np.testing.assert_array_equal(a.batch(1, 17).x, b.batch(1, 17).x)
    np.testing.assert_array_equal(a.batch(1, 17).y, b.batch(1, 17).y)
    assert not np.array_equal(a.batch(0, 17).x, a.batch(1, 17).x)
    assert len(a.batch(0, 1, multiplier=3)) == 24


def test_parameter_count_and_dtype():
    net = ResidualNet(8, 32, 4, 12, dtype="float32")
    params = net.zeros()
    assert len(params) == net.num_params == 8 * 32 + 12 * (32 * 32 + 32) + 4 * 32
    assert params.dtype == np.float32
    assert [b.name for b in params.blocks][1:-1] == net.block_names
