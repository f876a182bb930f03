"""Counter-based random streams.

Every stream is a Philox generator whose 128-bit key is derived from
``(master_seed, purpose_tag, index, level)`` through ``numpy.random.SeedSequence``.
Streams therefore never depend on the order in which replicas are processed.
"""
from __future__ import annotations

import hashlib

import numpy as np

# replicas in Monte Carlo runs are grouped in blocks; a block is the unit of work
BLOCK_SIZE = 4096


def tag_code(tag: str) -> int:
    return int.from_bytes(hashlib.blake2b(tag.encode(), digest_size=4).digest(), "little")


def stream(seed: int, tag: str, index: int = 0, level: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(tag_code(tag), int(index), int(level)))
    key = ss.generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def block_ranges(n: int, block_size: int = BLOCK_SIZE):
    """Yield ``(block_index, size)`` covering replicas ``0..n-1``."""
    for b, start in enumerate(range(0, n, block_size)):
        yield b, min(block_size, n - start)
