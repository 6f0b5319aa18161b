"""Counter-based random streams keyed by (master seed, tag, index).

Every sampler in the package takes an explicit ``numpy.random.Generator``.
Streams come from :func:`stream`, which keys a Philox generator by the
master seed, a stable hash of a string tag and a trial (or batch) index.
Two calls with the same triple give bit-identical draws no matter which
process or thread makes them.
"""
from __future__ import annotations

import secrets
import zlib

import numpy as np

__all__ = ["stream", "tag_key", "fresh_seed"]


def tag_key(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8")) & 0xFFFFFFFF


def stream(master_seed: int, tag: str = "", index: int = 0) -> np.random.Generator:
    """Return the generator for ``(master_seed, tag, index)``."""
    if master_seed < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(tag_key(tag), int(index)))
    return np.random.Generator(np.random.Philox(ss))


def fresh_seed() -> int:
    """A random 63-bit master seed, for runs where the caller gave none."""
    return secrets.randbits(63)
