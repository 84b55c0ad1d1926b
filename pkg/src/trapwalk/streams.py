"""Deterministic RNG stream derivation.

Every sampler in the package draws from an explicit stream addressed by
(master seed, label, *indices).  The map is stable across runs, platforms
and worker scheduling, so replicas are reproducible and order-independent:
replica i of an experiment always sees the same stream no matter which
worker executes it.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["substream", "StreamFamily", "label_key"]


def label_key(label: str) -> tuple[int, int]:
    """Map a stream label to two stable 32-bit words (not Python's salted hash)."""
    digest = hashlib.blake2s(label.encode("utf-8"), digest_size=8).digest()
    return (
        int.from_bytes(digest[:4], "little"),
        int.from_bytes(digest[4:], "little"),
    )


def substream(master_seed: int, label: str, *indices: int) -> np.random.Generator:
    """Return the PCG64 generator for (master_seed, label, *indices).

    Distinct (label, indices) pairs give streams that are independent for
    all practical purposes (SeedSequence spawn-key separation).  Indices may
    be negative (lattice sites); they are zig-zag encoded.
    """
    if master_seed < 0:
        raise ValueError("master_seed must be nonnegative")
    enc = tuple(2 * int(i) if i >= 0 else -2 * int(i) - 1 for i in indices)
    key = label_key(label) + enc
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=key)
    return np.random.Generator(np.random.PCG64(seq))


class StreamFamily:
    """All streams of one experiment, rooted at a single master seed."""

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)

    def get(self, label: str, *indices: int) -> np.random.Generator:
        return substream(self.master_seed, label, *indices)

    def __repr__(self) -> str:
        return f"StreamFamily(master_seed={self.master_seed})"
