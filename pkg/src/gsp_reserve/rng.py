"""Seed-derivation tree on top of numpy's counter-based Philox generator.

Every random stream is addressed by ``(master_seed, *path)`` where the path
elements are component names or integer indices. Adding a new component
never perturbs existing streams.
"""

import zlib

import numpy as np

__all__ = ["generator", "derive_seed"]


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    part = int(part)
    if part < 0:
        raise ValueError(f"path indices must be non-negative, got {part}")
    return part


def _sequence(seed, path) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(_key(p) for p in path))


def generator(seed, *path) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(_sequence(seed, path)))


def derive_seed(seed, *path) -> int:
    """A 64-bit integer seed for the node ``path`` below ``seed``."""
    return int(_sequence(seed, path).generate_state(1, dtype=np.uint64)[0])
