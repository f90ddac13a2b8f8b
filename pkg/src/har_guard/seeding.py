"""Seed fan-out: one top-level seed, independent streams per module tag."""

from __future__ import annotations

import hashlib

import numpy as np


def tag_hash(*parts) -> int:
    """Stable 64-bit hash of the string forms of ``parts``."""
    h = hashlib.blake2b("\x1f".join(map(str, parts)).encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def derive_seed(seed: int, *tags) -> int:
    return (int(seed) + tag_hash(*tags)) % (1 << 64)


def rng_for(seed: int, *tags) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) % (1 << 64), tag_hash(*tags)]))
