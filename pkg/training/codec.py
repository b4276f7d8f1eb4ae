"""
OUTER-GRADIENT CODECS
Wire formats for one replica's outer-gradient fragment:

- fp32:        identity baseline, 4 bytes per value
- e3m0:        4-bit float (1 sign bit, 3 exponent bits, no mantissa) with a
               per-fragment max-abs scale
- topk:        keep the largest-magnitude fraction, send (index, value) pairs
- random_drop: zero entries with probability p; survivors are rescaled by 1/(1-p) unless rescale is off

Decoded values are always accumulated in 32-bit (or the run's compute dtype).
"""

import math
import struct
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from core.errors import CodecError, ConfigurationError

# ============================================================================
# E3M0
# ============================================================================

E3M0_BIAS = 7
E3M0_MIN_EXPONENT = -6
E3M0_UNDERFLOW = 2.0 ** -6.5
E3M0_HEADER_BYTES = 8  # float32 scale + uint32 count


@dataclass(frozen=True)
class QuantBlock:
    scale: float
    codes: np.ndarray  # uint8, one 4-bit code per value
    count: int

    @property
    def nbytes(self) -> int:
        return e3m0_wire_size(self.count)

    def to_bytes(self) -> bytes:
        """4-byte LE scale, 4-byte LE count, then nibbles (low nibble = even index)."""
        codes = self.codes.astype(np.uint8)
        if codes.size % 2:
            codes = np.append(codes, np.uint8(0))
        packed = (codes[0::2] & 0x0F) | ((codes[1::2] & 0x0F) << 4)
        return struct.pack("<fI", self.scale, self.count) + packed.astype(np.uint8).tobytes()

    @classmethod
    def from_bytes(cls, payload: bytes) -> "QuantBlock":
        if len(payload) < E3M0_HEADER_BYTES:
            raise CodecError(f"payload of {len(payload)} bytes is shorter than the header")
        scale, count = struct.unpack_from("<fI", payload, 0)
        body = np.frombuffer(payload, dtype=np.uint8, offset=E3M0_HEADER_BYTES)
        if body.size != (count + 1) // 2:
            raise CodecError(f"expected {(count + 1) // 2} code bytes for {count} values, got {body.size}")
        codes = np.empty(body.size * 2, dtype=np.uint8)
        codes[0::2] = body & 0x0F
        codes[1::2] = body >> 4
        return cls(float(scale), codes[:count].copy(), int(count))


def e3m0_wire_size(count: int) -> int:
    return E3M0_HEADER_BYTES + (count + 1) // 2


def _first_non_finite(values: np.ndarray) -> Optional[int]:
    bad = np.flatnonzero(~np.isfinite(values))
    return int(bad[0]) if bad.size else None


def encode_e3m0(values: np.ndarray) -> QuantBlock:
    """Nearest-in-log2 rounding onto {0} U {+-2^k * scale : k = -6..0}."""
    values = np.asarray(values)
    bad = _first_non_finite(values)
    if bad is not None:
        raise CodecError("non-finite value cannot be encoded", index=bad, non_finite=True)

    magnitude = np.abs(values).astype(np.float64)
    count = int(values.size)
    scale = float(np.float32(magnitude.max())) if count else 0.0
    codes = np.zeros(count, dtype=np.uint8)
    if scale == 0.0:
        return QuantBlock(0.0, codes, count)

    ratio = magnitude / scale
    live = ratio >= E3M0_UNDERFLOW
    exponent = np.zeros(count, dtype=np.int64)
    exponent[live] = np.clip(np.rint(np.log2(ratio[live])), E3M0_MIN_EXPONENT, 0).astype(np.int64)
    e = np.where(live, exponent + E3M0_BIAS, 0).astype(np.uint8)
    sign = ((values < 0) & live).astype(np.uint8)
    codes[:] = (sign << 3) | e
    return QuantBlock(scale, codes, count)


def decode_e3m0(block: QuantBlock, dtype=np.float32) -> np.ndarray:
    codes = np.asarray(block.codes)
    if codes.size != block.count:
        raise CodecError(f"block declares {block.count} values but carries {codes.size} codes")
    if codes.size and int(codes.max()) > 0x0F:
        raise CodecError("code outside the 4-bit range", index=int(np.argmax(codes > 0x0F)))
    if not math.isfinite(block.scale) or block.scale < 0:
        raise CodecError(f"invalid scale {block.scale}")
    e = (codes & 0x07).astype(np.int64)
    sign = np.where(codes & 0x08, -1.0, 1.0)
    if block.scale == 0.0 and np.any(e):
        raise CodecError("zero scale with non-zero codes", index=int(np.argmax(e > 0)))
    out = np.where(e > 0, sign * np.ldexp(np.float64(block.scale), e - E3M0_BIAS), 0.0)
    return out.astype(dtype)


# ============================================================================
# Sparsifiers
# ============================================================================


class SparseVector(NamedTuple):
    indices: np.ndarray  # int32, ascending
    values: np.ndarray
    size: int

    def densify(self, dtype=np.float32) -> np.ndarray:
        out = np.zeros(self.size, dtype=dtype)
        out[self.indices] = self.values
        return out

    @property
    def nbytes(self) -> int:
        # uint32 size + uint32 nnz + (int32 index, float32 value) per kept entry
        return 8 + 8 * int(self.indices.size)


def topk_compress(values: np.ndarray, keep_fraction: float) -> SparseVector:
    """Keep ceil(keep_fraction * n) largest magnitudes; ties go to the lower index."""
    if not 0.0 < keep_fraction <= 1.0:
        raise ConfigurationError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    values = np.asarray(values)
    n = values.size
    k = min(n, math.ceil(keep_fraction * n))
    order = np.argsort(-np.abs(values), kind="stable")[:k]
    kept = np.sort(order).astype(np.int32)
    return SparseVector(kept, values[kept].copy(), n)


def random_drop_compress(values: np.ndarray, drop_prob: float, seed, rescale: bool = True) -> np.ndarray:
    """Drop each entry with probability drop_prob.

    With rescale the survivors are multiplied by 1/(1 - drop_prob) so the result
    is unbiased; without it they pass through unchanged.
    """
    if not 0.0 <= drop_prob < 1.0:
        raise ConfigurationError(f"drop_prob must be in [0, 1), got {drop_prob}")
    values = np.asarray(values)
    rng = np.random.default_rng(seed)
    keep = rng.random(values.size) >= drop_prob
    scale = values.dtype.type(1.0 / (1.0 - drop_prob) if rescale else 1.0)
    return np.where(keep, values * scale, values.dtype.type(0)).astype(values.dtype)


# ============================================================================
# Codec objects used by the all-reduce
# ============================================================================


class Transmission(NamedTuple):
    decoded: np.ndarray
    nbytes: int


class Codec:
    """Interface for compressing one replica's outer-gradient fragment."""

    kind = "base"

    def transmit(self, values: np.ndarray, seed=None) -> Transmission:
        raise NotImplementedError

    def wire_size(self, count: int) -> Optional[int]:
        """Exact payload size when it only depends on the value count."""
        return None

    def describe(self) -> dict:
        return {"kind": self.kind}


class Fp32Codec(Codec):
    kind = "fp32"

    def transmit(self, values, seed=None):
        bad = _first_non_finite(values)
        if bad is not None:
            raise CodecError("non-finite value in outer gradient", index=bad, non_finite=True)
        return Transmission(np.array(values, copy=True), self.wire_size(values.size))

    def wire_size(self, count):
        return 4 * count


class E3M0Codec(Codec):
    kind = "e3m0"

    def transmit(self, values, seed=None):
        block = encode_e3m0(values)
        return Transmission(decode_e3m0(block, dtype=values.dtype), block.nbytes)

    def wire_size(self, count):
        return e3m0_wire_size(count)


@dataclass
class TopKCodec(Codec):
    keep_fraction: float = 0.1
    kind = "topk"

    def __post_init__(self):
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ConfigurationError(f"keep_fraction must be in (0, 1], got {self.keep_fraction}")

    def transmit(self, values, seed=None):
        bad = _first_non_finite(values)
        if bad is not None:
            raise CodecError("non-finite value in outer gradient", index=bad, non_finite=True)
        sparse = topk_compress(values, self.keep_fraction)
        return Transmission(sparse.densify(values.dtype), sparse.nbytes)

    def wire_size(self, count):
        return 8 + 8 * min(count, math.ceil(self.keep_fraction * count))

    def describe(self):
        return {"kind": self.kind, "keep_fraction": self.keep_fraction}


@dataclass
class RandomDropCodec(Codec):
    drop_prob: float = 0.5
    rescale: bool = True
    kind = "random_drop"

    def __post_init__(self):
        if not 0.0 <= self.drop_prob < 1.0:
            raise ConfigurationError(f"drop_prob must be in [0, 1), got {self.drop_prob}")

    def transmit(self, values, seed=None):
        bad = _first_non_finite(values)
        if bad is not None:
            raise CodecError("non-finite value in outer gradient", index=bad, non_finite=True)
        dropped = random_drop_compress(values, self.drop_prob, seed, self.rescale)
        # survivors travel as float32; the mask is rebuilt from the shared seed
        return Transmission(dropped, 4 + 4 * int(np.count_nonzero(dropped)))

    def describe(self):
        return {"kind": self.kind, "drop_prob": self.drop_prob, "rescale": self.rescale}


def make_codec(kind: str, **params) -> Codec:
    if kind == "fp32":
        return Fp32Codec()
    if kind == "e3m0":
        return E3M0Codec()
    if kind == "topk":
        return TopKCodec(**params)
    if kind == "random_drop":
        return RandomDropCodec(**params)
    raise ConfigurationError(f"unknown codec kind {kind!r}; valid: fp32, e3m0, topk, random_drop")
