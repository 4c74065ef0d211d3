"""Shared helpers: brute-force oracles kept independent of the package
internals (plain Python loops over math primitives only).
"""
import math

import numpy as np
import pytest

from setok.types import FeatureGrid


def oracle_sq_dist(a, b):
    """Squared distance with channel-ascending sequential accumulation."""
    acc = 0.0
    for c in range(len(a)):
        diff = float(a[c]) - float(b[c])
        acc += diff * diff
    return acc


def oracle_all_sq_dists(feats):
    n = len(feats)
    out = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i != j:
                out[i][j] = oracle_sq_dist(feats[i], feats[j])
    return out


def oracle_knn_values(feats, query_idx, k):
    """K smallest distances from one feature to all others, ascending,
    ties broken by smaller raster index (stable sort on index).
    """
    n = len(feats)
    pairs = []
    for j in range(n):
        if j != query_idx:
            pairs.append((oracle_sq_dist(feats[query_idx], feats[j]), j))
    pairs.sort(key=lambda p: (p[0], p[1]))
    return [d for d, _ in pairs[:k]]


def oracle_local_density(feats, k):
    """Exhaustive O(n^2) density: exp of minus the mean of the k nearest
    squared distances, summed in ascending order.
    """
    out = []
    for i in range(len(feats)):
        vals = oracle_knn_values(feats, i, k)
        acc = 0.0
        for v in vals:
            acc += v
        out.append(np.exp(np.float64(-(acc / k))))
    return np.array(out)


def oracle_delta(feats, rho):
    n = len(feats)
    out = []
    for i in range(n):
        denser = [j for j in range(n) if rho[j] > rho[i]]
        if denser:
            out.append(min(oracle_sq_dist(feats[i], feats[j]) for j in denser))
        else:
            out.append(max(oracle_sq_dist(feats[i], feats[j]) for j in range(n)))
    return np.array(out)


def grid_from(values, h, w, d):
    arr = np.asarray(values, dtype=np.float32).reshape(h, w, d)
    return FeatureGrid.from_array(arr)


def random_grid(rng, h, w, d, scale=1.0):
    return FeatureGrid.from_array((rng.normal(size=(h, w, d)) * scale).astype(np.float32))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    from setok import _kernels

    _kernels.warmup()
