"""Dynamic time warping: exact O(nm) table and a FastDTW-style
coarsen/project/refine approximation. Local cost is |a_i - b_j|."""

from __future__ import annotations

import numpy as np
from numba import njit

from .errors import ParameterError

EXACT_THRESHOLD = 512


def _as_seq(x) -> np.ndarray:
    a = np.ascontiguousarray(x, dtype=np.float64).ravel()
    if a.size == 0:
        raise ParameterError("DTW inputs must be non-empty")
    if not np.all(np.isfinite(a)):
        raise ParameterError("DTW inputs must be finite")
    return a


@njit(cache=True)
def _dtw_full(a, b):
    n, m = a.shape[0], b.shape[0]
    prev = np.full(m + 1, np.inf)
    cur = np.empty(m + 1)
    prev[0] = 0.0
    for i in range(1, n + 1):
        cur[0] = np.inf
        ai = a[i - 1]
        for j in range(1, m + 1):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = abs(ai - b[j - 1]) + best
        prev, cur = cur, prev
    return prev[m]


def dtw_distance(a, b) -> float:
    """Exact DTW distance (sum of |a_i - b_j| along the optimal path)."""
    return float(_dtw_full(_as_seq(a), _as_seq(b)))


@njit(cache=True)
def _dtw_band(a, b, lo, hi):
    """DTW restricted to columns lo[i]..hi[i] of row i; returns (d, path)."""
    n, m = a.shape[0], b.shape[0]
    offs = np.empty(n + 1, dtype=np.int64)
    offs[0] = 0
    for i in range(n):
        offs[i + 1] = offs[i] + hi[i] - lo[i] + 1
    cost = np.full(offs[n], np.inf)
    for i in range(n):
        for j in range(lo[i], hi[i] + 1):
            c = abs(a[i] - b[j])
            if i == 0 and j == 0:
                cost[offs[0]] = c
                continue
            best = np.inf
            if i > 0:
                if lo[i - 1] <= j <= hi[i - 1]:
                    v = cost[offs[i - 1] + j - lo[i - 1]]
                    if v < best:
                        best = v
                if lo[i - 1] <= j - 1 <= hi[i - 1]:
                    v = cost[offs[i - 1] + j - 1 - lo[i - 1]]
                    if v < best:
                        best = v
            if j - 1 >= lo[i]:
                v = cost[offs[i] + j - 1 - lo[i]]
                if v < best:
                    best = v
            cost[offs[i] + j - lo[i]] = c + best
    # backtrack
    pi = np.empty(n + m, dtype=np.int64)
    pj = np.empty(n + m, dtype=np.int64)
    i, j, k = n - 1, m - 1, 0
    while True:
        pi[k] = i
        pj[k] = j
        k += 1
        if i == 0 and j == 0:
            break
        bi, bj, best = -1, -1, np.inf
        if i > 0 and j > 0 and lo[i - 1] <= j - 1 <= hi[i - 1]:
            best = cost[offs[i - 1] + j - 1 - lo[i - 1]]
            bi, bj = i - 1, j - 1
        if i > 0 and lo[i - 1] <= j <= hi[i - 1]:
            v = cost[offs[i - 1] + j - lo[i - 1]]
            if v < best:
                best = v
                bi, bj = i - 1, j
        if j > 0 and j - 1 >= lo[i]:
            v = cost[offs[i] + j - 1 - lo[i]]
            if v < best:
                best = v
                bi, bj = i, j - 1
        i, j = bi, bj
    return cost[offs[n - 1] + m - 1 - lo[n - 1]], pi[:k][::-1].copy(), pj[:k][::-1].copy()


def _coarsen(x: np.ndarray) -> np.ndarray:
    if x.size % 2:
        x = np.append(x, x[-1])
    return 0.5 * (x[0::2] + x[1::2])


def _project(pi, pj, n: int, m: int, radius: int):
    """Per-row column window around the upsampled coarse path."""
    lo = np.full(n, m, dtype=np.int64)
    hi = np.full(n, -1, dtype=np.int64)
    for ci, cj in zip(pi, pj):
        for i in (2 * ci, 2 * ci + 1):
            if i >= n:
                continue
            lo[i] = min(lo[i], 2 * cj)
            hi[i] = max(hi[i], min(2 * cj + 1, m - 1))
    lo2, hi2 = lo.copy(), hi.copy()
    for i in range(n):
        a, b = max(0, i - radius), min(n, i + radius + 1)
        lo2[i] = max(0, lo[a:b].min() - radius)
        hi2[i] = min(m - 1, hi[a:b].max() + radius)
    lo2[0] = 0
    hi2[-1] = m - 1
    return lo2, hi2


def _fastdtw(a: np.ndarray, b: np.ndarray, radius: int):
    min_size = radius + 2
    if a.size <= min_size or b.size <= min_size:
        lo = np.zeros(a.size, dtype=np.int64)
        hi = np.full(a.size, b.size - 1, dtype=np.int64)
        return _dtw_band(a, b, lo, hi)
    _, pi, pj = _fastdtw(_coarsen(a), _coarsen(b), radius)
    lo, hi = _project(pi, pj, a.size, b.size, radius)
    return _dtw_band(a, b, lo, hi)


def fastdtw_distance(a, b, radius: int = 1, exact_threshold: int = EXACT_THRESHOLD) -> float:
    """Approximate DTW by recursive coarsening and banded refinement.

    Inputs no longer than ``exact_threshold`` go to :func:`dtw_distance`.
    The approximation scores a real warping path, so it never undercuts the
    exact optimum.
    """
    if radius < 0:
        raise ParameterError("radius must be >= 0")
    a, b = _as_seq(a), _as_seq(b)
    if max(a.size, b.size) <= exact_threshold:
        return float(_dtw_full(a, b))
    return float(_fastdtw(a, b, radius)[0])
