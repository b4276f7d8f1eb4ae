"""
Named sub-seeds. Every random stream is derived from (seed, purpose, index...)
"""

import zlib

import numpy as np

PURPOSES = ("init", "teacher", "shard", "eval", "codec")


def purpose_code(purpose: str) -> int:
    if purpose not in PURPOSES:
        raise ValueError(f"unknown seed purpose {purpose!r}")
    return zlib.crc32(purpose.encode("ascii"))


def sub_seed(seed: int, purpose: str, *index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), purpose_code(purpose), *(int(i) for i in index)])


def sub_rng(seed: int, purpose: str, *index: int) -> np.random.Generator:
    """Independent generator for one (seed, purpose, index...) triple."""
    return np.random.default_rng(sub_seed(seed, purpose, *index))
