"""Seeded synthetic grids with generator-known blob labels.

Each fixture partitions the grid into contiguous spatial regions
(Voronoi cells of random sites) and gives every region a tight Gaussian
cloud around a distinct feature centroid, with centroids rescaled so
the minimum pairwise distance equals ``sep`` exactly. The labels double
as the oracle for clustering tests.
"""
from __future__ import annotations

import numpy as np

from .errors import EmptyInput
from .types import FeatureGrid, ReferenceMasks

# Per-member feature noise. Small against sep so within-blob kernel
# responses stay near 1 under the default bandwidth.
BLOB_NOISE = 0.01

# Voronoi site sets are resampled until every cell has at least this
# many members (capped by grid size), keeping KNN neighborhoods inside
# their own blob for the default K.
_MIN_REGION = 16
_MAX_SITE_TRIES = 1000


def _voronoi_labels(h: int, w: int, sites: np.ndarray) -> np.ndarray:
    ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    d2 = (ii[..., None] - sites[:, 0]) ** 2 + (jj[..., None] - sites[:, 1]) ** 2
    return np.argmin(d2, axis=2)  # ties: lower site index


def make_fixture(
    h: int,
    w: int,
    d: int,
    blobs: int,
    sep: float = 10.0,
    seed: int = 0,
    noise: float = BLOB_NOISE,
):
    """Build one fixture.

    Returns (grid, reference_masks, labels, meta) where labels is the
    (h, w) integer blob id per location and meta records the realized
    separation and sites.
    """
    if blobs < 1:
        raise EmptyInput(f"blobs must be >= 1, got {blobs}")
    if blobs > h * w:
        raise EmptyInput(f"{blobs} blobs cannot fit on a {h}x{w} grid")
    rng = np.random.default_rng(seed)

    min_region = max(1, min(_MIN_REGION, (h * w) // (2 * blobs)))
    labels = None
    sites = None
    for _ in range(_MAX_SITE_TRIES):
        flat = rng.choice(h * w, size=blobs, replace=False)
        cand_sites = np.stack([flat // w, flat % w], axis=1)
        cand = _voronoi_labels(h, w, cand_sites)
        if np.bincount(cand.reshape(-1), minlength=blobs).min() >= min_region:
            labels, sites = cand, cand_sites
            break
    if labels is None:
        raise EmptyInput(
            f"could not place {blobs} regions of >= {min_region} cells on {h}x{w}"
        )

    centroids = rng.standard_normal((blobs, d))
    if blobs > 1:
        diffs = centroids[:, None, :] - centroids[None, :, :]
        dist = np.sqrt((diffs**2).sum(axis=2))
        np.fill_diagonal(dist, np.inf)
        centroids = centroids * (sep / dist.min())
        diffs = centroids[:, None, :] - centroids[None, :, :]
        dist = np.sqrt((diffs**2).sum(axis=2))
        np.fill_diagonal(dist, np.inf)
        realized = float(dist.min())
    else:
        realized = float("inf")

    feats = centroids[labels] + rng.normal(0.0, noise, size=(h, w, d))
    grid = FeatureGrid.from_array(feats.astype(np.float32))

    pi = (labels[..., None] == np.arange(blobs)).astype(np.float64)
    refs = ReferenceMasks(pi=pi, labels=[f"blob{i}" for i in range(blobs)])

    meta = {
        "h": h,
        "w": w,
        "d": d,
        "blobs": blobs,
        "sep": sep,
        "seed": seed,
        "noise": noise,
        "min_sep": realized,
        "sites": sites.tolist(),
    }
    return grid, refs, labels, meta
