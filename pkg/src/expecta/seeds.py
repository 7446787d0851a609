"""Deterministic RNG derivation.

Every random draw in the package comes from a numpy PCG64 generator keyed
by ``SeedSequence((root_seed, *path))``.  String path components are folded
to 64-bit integers with blake2s, so the derivation is platform independent
and a single 64-bit root seed reproduces the whole pipeline.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (bool,)):
        return int(part)
    if isinstance(part, (int, np.integer)):
        return int(part)
    if isinstance(part, str):
        digest = hashlib.blake2s(part.encode("utf8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    raise TypeError(f"seed path components must be int or str, got {type(part)!r}")


def spawn(seed: int, *path) -> np.random.Generator:
    """Generator for the stream addressed by (seed, *path)."""
    entropy = (int(seed),) + tuple(_key(p) for p in path)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def as_generator(seed) -> np.random.Generator:
    """Accept either a root seed or an already-derived generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return spawn(int(seed))


def derive(seed: int, *path) -> int:
    """Integer child seed for the stream addressed by (seed, *path)."""
    return int(spawn(seed, *path).integers(0, 2**63))
