"""Text embedder shared by every similarity check.

The default is a hashed character n-gram model: deterministic, dependency
free and good enough to separate HAR prompts from filler. Anything with an
``embed(text) -> unit vector`` method can replace it.
"""

from __future__ import annotations

import zlib
from functools import lru_cache
from typing import Protocol, Sequence

import numpy as np


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


class HashedNgramEmbedder:
    """Character ``n``-gram counts hashed (CRC-32) into ``dim`` buckets,
    L2-normalised. Text shorter than ``n`` maps to the first basis vector."""

    def __init__(self, dim: int = 256, n: int = 3):
        self.dim = dim
        self.n = n
        self._cached = lru_cache(maxsize=8192)(self._embed)

    def _embed(self, text: str) -> np.ndarray:
        t = text.lower()
        v = np.zeros(self.dim)
        grams = [t[i:i + self.n] for i in range(len(t) - self.n + 1)]
        if grams:
            idx = np.fromiter((zlib.crc32(g.encode("utf-8")) % self.dim for g in grams), dtype=np.int64,
                              count=len(grams))
            v = np.bincount(idx, minlength=self.dim).astype(float)
        norm = np.linalg.norm(v)
        if norm == 0:
            v = np.zeros(self.dim)
            v[0] = 1.0
        else:
            v /= norm
        v.flags.writeable = False
        return v

    def embed(self, text: str) -> np.ndarray:
        return self._cached(text)


_DEFAULT = HashedNgramEmbedder()


def default_embedder() -> HashedNgramEmbedder:
    return _DEFAULT


def embed(text: str) -> np.ndarray:
    return _DEFAULT.embed(text)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def max_similarity(query: np.ndarray, others: Sequence[np.ndarray]) -> tuple[float, int]:
    """Best cosine against ``others`` and its index; lowest index wins ties."""
    if len(others) == 0:
        return -1.0, -1
    sims = np.asarray(others) @ query
    i = int(np.argmax(sims))
    return float(sims[i]), i
