import math

import numpy as np
import pytest

from core.errors import CodecError, ConfigurationError
from training.codec import (
    QuantBlock,
    TopKCodec,
    decode_e3m0,
    e3m0_wire_size,
    encode_e3m0,
    make_codec,
    random_drop_compress,
    topk_compress,
)
from training.engine import all_reduce_mean

VALID_CODES = [c for c in range(16) if c != 0x08]


def test_every_valid_code_round_trips_under_random_scales():
    rng = np.random.default_rng(0)
    codes = np.array(VALID_CODES, dtype=np.uint8)
    for _ in range(50):
        scale = float(np.float32(rng.uniform(1e-3, 1e3)))
        values = decode_e3m0(QuantBlock(scale, codes, codes.size))
        again = encode_e3m0(values)
        assert again.scale == scale
        np.testing.assert_array_equal(again.codes, codes)
        np.testing.assert_array_equal(decode_e3m0(again), values)


def test_relative_error_bound_for_in_range_values():
    rng = np.random.default_rng(1)
    values = (rng.standard_normal(100_000) * np.exp(rng.uniform(-4, 4, 100_000))).astype(np.float32)
    block = encode_e3m0(values)
    decoded = decode_e3m0(block)
    in_range = np.abs(values) >= block.scale * 2.0 ** -6
    rel = np.abs(decoded[in_range] - values[in_range]) / np.abs(values[in_range])
    assert rel.max() <= math.sqrt(2) - 1 + 1e-6
    assert np.all(np.sign(decoded[in_range]) == np.sign(values[in_range]))


def test_tiny_values_flush_to_zero():
    block = encode_e3m0(np.array([1.0, 2.0 ** -7, -(2.0 ** -8)], dtype=np.float32))
    assert decode_e3m0(block).tolist() == [1.0, 0.0, 0.0]


def test_all_zero_fragment():
    block = encode_e3m0(np.zeros(5, dtype=np.float32))
    assert block.scale == 0.0
    assert decode_e3m0(block).tolist() == [0.0] * 5


@pytest.mark.parametrize("count", [0, 1, 2, 7, 1000])
def test_wire_size_formula(count):
    block = encode_e3m0(np.linspace(-1, 1, count, dtype=np.float32))
    assert block.nbytes == e3m0_wire_size(count) == 8 + math.ceil(count / 2)
    assert len(block.to_bytes()) == block.nbytes


def test_bytes_round_trip():
    values = np.array([0.5, -0.25, 0.0, 1.0, -1.0], dtype=np.float32)
    block = encode_e3m0(values)
    parsed = QuantBlock.from_bytes(block.to_bytes())
    np.testing.assert_array_equal(decode_e3m0(parsed), decode_e3m0(block))


def test_malformed_payloads():
    with pytest.raises(CodecError):
        QuantBlock.from_bytes(b"\x00\x00")
    payload = encode_e3m0(np.ones(6, dtype=np.float32)).to_bytes()
    with pytest.raises(CodecError):
        QuantBlock.from_bytes(payload[:-1])
    with pytest.raises(CodecError):
        decode_e3m0(QuantBlock(1.0, np.array([16], dtype=np.uint8), 1))
    with pytest.raises(CodecError):
        decode_e3m0(QuantBlock(0.0, np.array([3], dtype=np.uint8), 1))


def test_non_finite_input_reports_index():
    with pytest.raises(CodecError) as info:
        encode_e3m0(np.array([1.0, 2.0, np.inf], dtype=np.float32))
    assert info.value.index == 2


def test_topk_keeps_largest_with_low_index_ties():
    values = np.array([0.1, -3.0, 2.0, -2.0, 0.5], dtype=np.float32)
    sparse = topk_compress(values, 0.4)
    assert sparse.indices.tolist() == [1, 2]
    assert sparse.densify().tolist() == [0.0, -3.0, 2.0, 0.0, 0.0]
    assert sparse.nbytes == 8 + 8 * 2
    assert TopKCodec(0.4).wire_size(5) == sparse.nbytes


def test_random_drop_is_seeded_and_unbiased_in_scale():
    values = np.ones(1000, dtype=np.float32)
    a = random_drop_compress(values, 0.5, seed=3)
    b = random_drop_compress(values, 0.5, seed=3)
    np.testing.assert_array_equal(a, b)
    assert set(np.unique(a).tolist()) <= {0.0, 2.0}
    assert 400 < np.count_nonzero(a) < 600
    np.testing.assert_array_equal(random_drop_compress(values, 0.0, seed=1), values)


def test_codec_parameter_ranges():
    with pytest.raises(ConfigurationError):
        topk_compress(np.ones(3), 0.0)
    with pytest.raises(ConfigurationError):
        random_drop_compress(np.ones(3), 1.0, seed=0)
    with pytest.raises(ConfigurationError):
        make_codec("fp8")


def test_all_reduce_averages_in_replica_order():
    deltas = [np.array([1.0, 2.0], dtype=np.float32), np.array([3.0, -2.0], dtype=np.float32)]
    avg, sizes = all_reduce_mean(deltas, make_codec("fp32"))
    assert avg.tolist() == [2.0, 0.0]
    assert sizes == [8, 8]


def test_all_reduce_codec_failure_names_replica():
    deltas = [np.ones(3, dtype=np.float32), np.array([1.0, np.nan, 0.0], dtype=np.float32)]
    with pytest.raises(CodecError) as info:
        all_reduce_mean(deltas, make_codec("e3m0"))
    assert info.value.replica == 1
    assert info.value.index == 1


def test_grid_values_encode_exactly():
    block = encode_e3m0(np.array([1.0, -0.5, 0.25], dtype=np.float32))
    assert block.scale == 1.0
    assert decode_e3m0(block).tolist() == [1.0, -0.5, 0.25]


def test_off_grid_value_rounds_in_log_space():
    block = encode_e3m0(np.array([1.0, 0.7], dtype=np.float32))
    assert decode_e3m0(block).tolist() == [1.0, 0.5]


def test_negative_top_code_decodes_to_minus_scale():
    block = QuantBlock(2.0, np.array([0x0F], dtype=np.uint8), 1)
    assert decode_e3m0(block).tolist() == [-2.0]


def test_topk_single_survivor():
    sparse = topk_compress(np.array([3.0, -1.0, 2.0], dtype=np.float32), 1 / 3)
    assert sparse.densify().tolist() == [3.0, 0.0, 0.0]
    np.testing.assert_array_equal(topk_compress(np.arange(4.0), 1.0).densify(np.float64), np.arange(4.0))


def test_random_drop_is_unbiased_over_seeds():
    values = np.array([1.0, -2.0, 0.5], dtype=np.float64)
    total = np.zeros_like(values)
    trials = 10_000
    for seed in range(trials):
        total += random_drop_compress(values, 0.5, seed=seed)
    # each survivor is doubled, so the per-entry std is |v|
    sigma = np.abs(values) / math.sqrt(trials)
    assert np.all(np.abs(total / trials - values) <= 4 * sigma)


def test_all_reduce_of_opposite_deltas_cancels():
    x = np.array([0.3, -1.5, 2.0], dtype=np.float32)
    avg, _ = all_reduce_mean([x, -x], make_codec("fp32"))
    assert avg.tolist() == [0.0, 0.0, 0.0]
    avg, _ = all_reduce_mean(
        [np.array([1.0, 2.0], dtype=np.float32), np.array([3.0, 4.0], dtype=np.float32)], make_codec("fp32")
    )
    assert avg.tolist() == [2.0, 3.0]


def test_e3m0_all_reduce_of_grid_values_is_exact_mean():
    deltas = [np.array([1.0, -0.5], dtype=np.float32), np.array([0.5, 0.25], dtype=np.float32)]
    avg, sizes = all_reduce_mean(deltas, make_codec("e3m0"))
    assert avg.tolist() == [0.75, -0.125]
    assert sizes == [e3m0_wire_size(2)] * 2


def test_random_drop_without_rescale_keeps_survivors_unchanged():
    values = np.linspace(1.0, 2.0, 64, dtype=np.float32)
    scaled = random_drop_compress(values, 0.5, seed=4)
    plain = random_drop_compress(values, 0.5, seed=4, rescale=False)
    np.testing.assert_array_equal(plain != 0, scaled != 0)
    np.testing.assert_array_equal(plain[plain != 0], values[plain != 0])
    codec = make_codec("random_drop", drop_prob=0.5, rescale=False)
    np.testing.assert_array_equal(codec.transmit(values, seed=4).decoded, plain)
    assert codec.describe()["rescale"] is False
