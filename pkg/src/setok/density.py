"""Density-peak seed scoring over a feature grid.

Per location: local density rho from the mean squared distance to the K
nearest features, delta as the squared distance to the nearest strictly
denser location (or the farthest location for density maxima), and the
seed score rho * delta. Distances are squared Euclidean in feature
space only; no spatial term.
"""
from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import KTooLarge, ShapeMismatch
from .types import FeatureGrid, SeedScores


def _check_k(grid: FeatureGrid, k: int) -> None:
    if k < 1:
        raise KTooLarge(f"K must be >= 1, got {k}")
    if k > grid.n_locations - 1:
        raise KTooLarge(
            f"K={k} exceeds the {grid.n_locations - 1} available neighbors "
            f"of a {grid.h}x{grid.w} grid"
        )


def knn_sq_distances(grid: FeatureGrid, query: tuple, k: int) -> np.ndarray:
    """The K smallest squared feature distances from ``query`` to all
    other locations, ascending (ties by smaller raster index).
    """
    _check_k(grid, k)
    i, j = query
    feats = grid.features64()
    row = _kernels.sq_dists_to_row(feats, i * grid.w + j)
    row = np.delete(row, i * grid.w + j)
    order = np.argsort(row, kind="stable")
    return row[order[:k]]


def local_density(grid: FeatureGrid, k: int) -> np.ndarray:
    """Local density: exp(-mean of the K nearest squared distances)."""
    _check_k(grid, k)
    dists = _kernels.pairwise_sq_dists(grid.features64())
    return np.exp(-_kernels.knn_mean_sq(dists, k)).reshape(grid.h, grid.w)


def _delta_from_dists(dists: np.ndarray, rho_flat: np.ndarray) -> np.ndarray:
    # Strictly denser only: density ties fall through to the max branch,
    # so exactly the argmax-rho tie set takes it. min/max are order-free,
    # hence backend-independent bitwise.
    denser = rho_flat[None, :] > rho_flat[:, None]
    has_denser = denser.any(axis=1)
    masked = np.where(denser, dists, np.inf)
    nearest_denser = np.min(masked, axis=1)
    farthest = np.max(dists, axis=1)
    return np.where(has_denser, nearest_denser, farthest)


def min_distance_to_denser(grid: FeatureGrid, rho: np.ndarray) -> np.ndarray:
    """Squared distance to the nearest strictly denser location; density
    maxima instead get their distance to the farthest location.
    """
    if rho.shape != (grid.h, grid.w):
        raise ShapeMismatch(f"rho shape {rho.shape} != grid ({grid.h}, {grid.w})")
    dists = _kernels.pairwise_sq_dists(grid.features64())
    return _delta_from_dists(dists, rho.reshape(-1)).reshape(grid.h, grid.w)


def seed_scores(grid: FeatureGrid, k: int) -> SeedScores:
    """Full scoring pass: rho, delta, and score = rho * delta."""
    _check_k(grid, k)
    dists = _kernels.pairwise_sq_dists(grid.features64())
    rho_flat = np.exp(-_kernels.knn_mean_sq(dists, k))
    delta_flat = _delta_from_dists(dists, rho_flat)
    shape = (grid.h, grid.w)
    rho = rho_flat.reshape(shape)
    delta = delta_flat.reshape(shape)
    return SeedScores(rho=rho, delta=delta, score=rho * delta, knn_k=k)
