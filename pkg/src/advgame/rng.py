"""Labeled random substreams derived from a single root seed.

Every consumer of randomness asks for a generator by name, e.g.
``substream(42, "attack", "MIME(bart)", "chunk", 3)``.  The same labels always
give the same stream, independent of call order or thread scheduling.
"""
from __future__ import annotations

import hashlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def _label_words(label) -> list[int]:
    digest = hashlib.sha256(str(label).encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def substream(root_seed: int, *labels) -> np.random.Generator:
    """Return an independent PCG64 generator keyed by ``root_seed`` and ``labels``."""
    if root_seed < 0:
        raise ValueError("seed must be a non-negative integer")
    key: list[int] = []
    for label in labels:
        key.extend(_label_words(label))
    seq = np.random.SeedSequence(int(root_seed) & SEED_MASK, spawn_key=tuple(key))
    return np.random.Generator(np.random.PCG64(seq))


def derive_seed(root_seed: int, *labels) -> int:
    """A 64-bit integer seed for APIs that take plain seeds rather than generators."""
    return int(substream(root_seed, *labels).integers(0, 2**63 - 1))
