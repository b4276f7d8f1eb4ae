"""
PARAMETER SPACE
Flat parameter vectors with a named block structure, and the partition of
synchronizable blocks into fragments with their sync offsets.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import ConfigurationError, StructuralError


@dataclass(frozen=True)
class Block:
    name: str
    start: int
    length: int

    @property
    def stop(self) -> int:
        return self.start + self.length


class ParamVector:
    """Contiguous parameter storage split into named, ordered blocks"""

    def __init__(self, data: np.ndarray, blocks: Sequence[Block]):
        data = np.asarray(data)
        if data.ndim != 1:
            raise StructuralError(f"parameter data must be 1-D, got shape {data.shape}")
        cursor = 0
        for block in blocks:
            if block.start != cursor or block.length < 0:
                raise StructuralError(
                    f"block {block.name!r} starts at {block.start}, expected {cursor}"
                )
            cursor = block.stop
        if cursor != data.size:
            raise StructuralError(f"blocks cover {cursor} values but data has {data.size}")
        self.data = data
        self.blocks: Tuple[Block, ...] = tuple(blocks)
        self._by_name: Dict[str, Block] = {b.name: b for b in self.blocks}
        if len(self._by_name) != len(self.blocks):
            raise StructuralError("block names must be unique")

    @classmethod
    def from_layout(cls, layout: Sequence[Tuple[str, int]], dtype=np.float32) -> "ParamVector":
        blocks, cursor = [], 0
        for name, length in layout:
            blocks.append(Block(name, cursor, int(length)))
            cursor += int(length)
        return cls(np.zeros(cursor, dtype=dtype), blocks)

    def __len__(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def block(self, name: str) -> np.ndarray:
        b = self._by_name[name]
        return self.data[b.start:b.stop]

    def block_range(self, name: str) -> Block:
        return self._by_name[name]

    def copy(self) -> "ParamVector":
        return ParamVector(self.data.copy(), self.blocks)

    def with_data(self, data: np.ndarray) -> "ParamVector":
        if data.shape != self.data.shape:
            raise StructuralError(f"expected {self.data.shape}, got {data.shape}")
        return ParamVector(data, self.blocks)

    def zeros_like(self) -> "ParamVector":
        return ParamVector(np.zeros_like(self.data), self.blocks)

    def same_layout(self, other: "ParamVector") -> bool:
        return self.blocks == other.blocks

    def __repr__(self) -> str:
        names = ", ".join(b.name for b in self.blocks[:4])
        more = "" if len(self.blocks) <= 4 else f", ... +{len(self.blocks) - 4}"
        return f"ParamVector(n={len(self)}, dtype={self.dtype}, blocks=[{names}{more}])"


class FragmentPattern(str, Enum):
    SEQUENTIAL = "sequential"
    STRIDED = "strided"


@dataclass(frozen=True)
class FragmentSpec:
    num_blocks: int
    fragment_size: int
    pattern: FragmentPattern
    fragments: Tuple[Tuple[int, ...], ...]
    offsets: Optional[Tuple[int, ...]] = None
    period: Optional[int] = None

    @property
    def num_fragments(self) -> int:
        return len(self.fragments)

    def fragment_of(self, block_index: int) -> int:
        for p, blocks in enumerate(self.fragments):
            if block_index in blocks:
                return p
        raise StructuralError(f"block {block_index} is not in any fragment")

    def first_send(self, p: int) -> int:
        """Smallest t >= H with (t - t_p) mod H == 0."""
        if self.offsets is None or self.period is None:
            raise ConfigurationError("fragment offsets have not been assigned")
        return self.period + self.offsets[p]

    def to_dict(self) -> dict:
        return {
            "num_blocks": self.num_blocks,
            "fragment_size": self.fragment_size,
            "pattern": self.pattern.value,
            "fragments": [list(f) for f in self.fragments],
            "offsets": None if self.offsets is None else list(self.offsets),
            "H": self.period,
        }


def partition(num_blocks: int, fragment_size: int, pattern) -> FragmentSpec:
    """Split blocks 0..L-1 into L/|p| fragments, sequentially or strided."""
    pattern = FragmentPattern(pattern)
    if num_blocks < 1 or fragment_size < 1:
        raise ConfigurationError(
            f"num_blocks ({num_blocks}) and fragment_size ({fragment_size}) must be >= 1"
        )
    if num_blocks % fragment_size != 0:
        raise ConfigurationError(
            f"fragment_size {fragment_size} does not divide num_blocks {num_blocks}"
        )
    P = num_blocks // fragment_size
    if pattern is FragmentPattern.SEQUENTIAL:
        fragments = tuple(
            tuple(range(p * fragment_size, (p + 1) * fragment_size)) for p in range(P)
        )
    else:
        fragments = tuple(tuple(range(p, num_blocks, P)) for p in range(P))
    return FragmentSpec(num_blocks, fragment_size, pattern, fragments)


def assign_offsets(spec: FragmentSpec, H: int) -> FragmentSpec:
    """Evenly spaced offsets t_p = floor(p * H / P)."""
    P = spec.num_fragments
    if H < 1:
        raise ConfigurationError(f"H must be >= 1, got {H}")
    if H < P:
        raise ConfigurationError(f"H ({H}) must be >= number of fragments ({P})")
    offsets = tuple((p * H) // P for p in range(P))
    return replace(spec, offsets=offsets, period=H)


@dataclass(frozen=True)
class FragmentLayout:
    """Flat parameter indices of every fragment.

    Blocks that are not synchronizable on their own (input projection,
    output head) are appended to the last fragment.
    """

    spec: FragmentSpec
    indices: Tuple[np.ndarray, ...]
    embedding_mask: Tuple[np.ndarray, ...] = field(default=())
    block_counts: Tuple[int, ...] = field(default=())

    @classmethod
    def build(
        cls,
        spec: FragmentSpec,
        params: ParamVector,
        block_names: Sequence[str],
        embedding_block: Optional[str] = None,
    ) -> "FragmentLayout":
        if len(block_names) != spec.num_blocks:
            raise StructuralError(
                f"{len(block_names)} synchronizable blocks, spec expects {spec.num_blocks}"
            )
        sync_names = set(block_names)
        extras = [b for b in params.blocks if b.name not in sync_names]

        indices: List[np.ndarray] = []
        masks: List[np.ndarray] = []
        block_counts: List[int] = []
        last = spec.num_fragments - 1
        for p, frag in enumerate(spec.fragments):
            members = [params.block_range(block_names[i]) for i in frag]
            block_counts.append(sum(b.length for b in members))
            if p == last:
                members = members + extras
            idx = np.concatenate(
                [np.arange(b.start, b.stop, dtype=np.int64) for b in members]
            ) if members else np.zeros(0, dtype=np.int64)
            indices.append(idx)
            mask = np.zeros(idx.size, dtype=bool)
            if embedding_block is not None:
                emb = params.block_range(embedding_block)
                mask = (idx >= emb.start) & (idx < emb.stop)
            masks.append(mask)

        covered = np.sort(np.concatenate(indices))
        if covered.size != len(params) or not np.array_equal(covered, np.arange(len(params))):
            raise StructuralError("fragments do not cover the parameter vector exactly once")
        return cls(spec, tuple(indices), tuple(masks), tuple(block_counts))

    def size(self, p: int) -> int:
        return int(self.indices[p].size)

    def gather(self, data: np.ndarray, p: int) -> np.ndarray:
        return data[self.indices[p]]

    def scatter(self, data: np.ndarray, p: int, values: np.ndarray) -> None:
        data[self.indices[p]] = values

    def mask_for(self, fragments: Sequence[int], n: int) -> np.ndarray:
        """Boolean mask over the flat vector selecting the given fragments."""
        mask = np.zeros(n, dtype=bool)
        for p in fragments:
            mask[self.indices[p]] = True
        return mask
