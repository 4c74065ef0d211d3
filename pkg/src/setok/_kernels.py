"""Hot numeric kernels: pairwise squared distances and KNN reductions.

Two interchangeable backends: numba @njit loops and a pure-numpy path,
selected by the SETOK_NUMBA env var ("0" disables numba). Both backends
accumulate in the same fixed order (channel-ascending, then
neighbor-distance-ascending), so their outputs are bitwise identical;
exp/log are applied by the callers on whole arrays, never inside a
kernel, which keeps transcendental rounding identical across backends.
"""
from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    _HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


# Flipping this (or setting SETOK_NUMBA=0 before import) routes every
# dispatch below through the numpy path.
NUMBA_ENABLED = _HAS_NUMBA and os.environ.get("SETOK_NUMBA", "1") != "0"


@njit(cache=True)
def _pairwise_sq_dists_nb(feats):
    n, d = feats.shape
    out = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for c in range(d):
                diff = feats[i, c] - feats[j, c]
                acc += diff * diff
            out[i, j] = acc
            out[j, i] = acc
    return out


def _pairwise_sq_dists_np(feats: np.ndarray) -> np.ndarray:
    n, d = feats.shape
    out = np.zeros((n, n), dtype=np.float64)
    for c in range(d):
        diff = feats[:, c, None] - feats[None, :, c]
        out += diff * diff
    return out


def pairwise_sq_dists(feats: np.ndarray) -> np.ndarray:
    """All-pairs squared Euclidean distances for (n, d) float64 features."""
    feats = np.ascontiguousarray(feats, dtype=np.float64)
    if NUMBA_ENABLED:
        return _pairwise_sq_dists_nb(feats)
    return _pairwise_sq_dists_np(feats)


@njit(cache=True)
def _knn_mean_sq_nb(dists, k):
    n = dists.shape[0]
    out = np.empty(n, dtype=np.float64)
    vals = np.empty(n - 1, dtype=np.float64)
    for i in range(n):
        m = 0
        for j in range(n):
            if j != i:
                vals[m] = dists[i, j]
                m += 1
        # partial selection sort: k smallest, ascending
        for t in range(k):
            best = t
            for j in range(t + 1, m):
                if vals[j] < vals[best]:
                    best = j
            tmp = vals[t]
            vals[t] = vals[best]
            vals[best] = tmp
        acc = 0.0
        for t in range(k):
            acc += vals[t]
        out[i] = acc / k
    return out


def _knn_mean_sq_np(dists: np.ndarray, k: int) -> np.ndarray:
    n = dists.shape[0]
    d = dists.copy()
    np.fill_diagonal(d, np.inf)
    smallest = np.sort(d, axis=1)[:, :k]
    acc = np.zeros(n, dtype=np.float64)
    for t in range(k):
        acc += smallest[:, t]
    return acc / k

def knn_mean_sq(dists: np.ndarray, k: int) -> np.ndarray:
    """Per-row mean of the k smallest off-diagonal entries.

    Summation runs over the k values in ascending order in both
    backends, so results are bitwise identical.
    """
    if NUMBA_ENABLED:
        return _knn_mean_sq_nb(dists, k)
    return _knn_mean_sq_np(dists, k)


@njit(cache=True)
def _sq_dists_to_row_nb(feats, idx):
    n, d = feats.shape
    out = np.empty(n, dtype=np.float64)
    for j in range(n):
        acc = 0.0
        for c in range(d):
            diff = feats[idx, c] - feats[j, c]
            acc += diff * diff
        out[j] = acc
    return out


def _sq_dists_to_row_np(feats: np.ndarray, idx: int) -> np.ndarray:
    n, d = feats.shape
    out = np.zeros(n, dtype=np.float64)
    for c in range(d):
        diff = feats[idx, c] - feats[:, c]
        out += diff * diff
    return out


def sq_dists_to_row(feats: np.ndarray, idx: int) -> np.ndarray:
    """Squared distances from feature row ``idx`` to every row."""
    feats = np.ascontiguousarray(feats, dtype=np.float64)
    if NUMBA_ENABLED:
        return _sq_dists_to_row_nb(feats, idx)
    return _sq_dists_to_row_np(feats, idx)


def warmup() -> None:
    """Trigger JIT compilation of every kernel on tiny inputs."""
    if not NUMBA_ENABLED:
        return
    f = np.zeros((3, 2), dtype=np.float64)
    d = pairwise_sq_dists(f)
    knn_mean_sq(d, 1)
    sq_dists_to_row(f, 0)
