"""Iterative scope-based clustering of a feature grid into masks.

Each round picks the unassigned location with the best seed score,
spreads a kernel-similarity alpha map from it, claims alpha * scope as
a new mask, and shrinks the scope by the complement. Whatever scope
survives the stop rule is appended as a remainder mask.
"""
from __future__ import annotations

import math

import numpy as np

from . import _kernels, density
from .errors import DimMismatch, EmptyGrid, EmptyInput, MaskModeError, NotNormalized
from .types import REMAINDER, FeatureGrid, MaskStack, TokenizerConfig

# Scope mass below this is numerically empty; no remainder mask is kept.
REMAINDER_EPS = 1e-6

_LN2 = math.log(2.0)


def distance_kernel(u: np.ndarray, v: np.ndarray, bandwidth: float) -> float:
    """Similarity exp(-||u - v||^2 * bandwidth * ln 2): one for identical
    vectors, halving every 1/bandwidth of squared distance.
    """
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if u.shape != v.shape:
        raise DimMismatch(f"vector dims differ: {u.shape[0]} vs {v.shape[0]}")
    acc = 0.0
    for c in range(u.shape[0]):
        diff = u[c] - v[c]
        acc += diff * diff
    return float(np.exp(-acc * (bandwidth * _LN2)))


def _alpha_rows(dists: np.ndarray, bandwidth: float) -> np.ndarray:
    """Kernel response for precomputed squared distances."""
    return np.exp(-dists * (bandwidth * _LN2))


def _scope_loop(
    score_flat: np.ndarray,
    alpha_all: np.ndarray,
    config: TokenizerConfig,
    stop: str = "scope",
    score_tau: float = 0.0,
):
    """Shared seed/alpha/scope iteration.

    stop="scope": run while max(scope) >= stop_tau.
    stop="score": run while the picked seed's raw score > score_tau
    (used by the threshold baseline). max_clusters caps both.
    Returns (masks list of flat arrays, seed indices, final scope).
    """
    n = score_flat.shape[0]
    scope = np.ones(n, dtype=np.float64)
    masks: list[np.ndarray] = []
    seeds: list[int] = []
    while len(masks) < config.max_clusters:
        if stop == "scope" and not (scope.max() >= config.stop_tau):
            break
        seed = int(np.argmax(score_flat * scope))  # ties: lowest raster index
        if stop == "score" and not (score_flat[seed] > score_tau):
            break
        alpha = alpha_all[seed]
        masks.append(alpha * scope)
        seeds.append(seed)
        scope = scope * (1.0 - alpha)
    return masks, seeds, scope


def _literal_loop(score_flat: np.ndarray, alpha_all: np.ndarray, config: TokenizerConfig):
    """Pseudocode-literal variant: the score map itself plays the scope
    role and masks are score * alpha. Scores are pre-scaled to [0, 1] so
    the masks stay valid; offered for comparison only.
    """
    peak = score_flat.max()
    s = score_flat / peak if peak > 0 else np.ones_like(score_flat)
    masks: list[np.ndarray] = []
    seeds: list[int] = []
    while len(masks) < config.max_clusters and s.max() >= config.stop_tau:
        seed = int(np.argmax(s))
        alpha = alpha_all[seed]
        masks.append(s * alpha)
        seeds.append(seed)
        s = s * (1.0 - alpha)
    return masks, seeds, s


def cluster(grid: FeatureGrid, config: TokenizerConfig | None = None) -> MaskStack:
    """Cluster a grid into a variable number of masks.

    Parameters
    ----------
    grid : FeatureGrid
        Input features; needs at least two locations.
    config : TokenizerConfig, optional
        Hyperparameters; defaults throughout.

    Returns
    -------
    MaskStack
        Soft masks summing to one per location (plus remainder), or the
        hardened one-hot stack when config.assignment == "hard".
    """
    config = config or TokenizerConfig()
    config.validate()
    if grid.n_locations < 2:
        raise EmptyGrid(f"cannot cluster a {grid.h}x{grid.w} grid")

    feats = grid.features64()
    dists = _kernels.pairwise_sq_dists(feats)
    rho_flat = np.exp(-_kernels.knn_mean_sq(dists, config.knn_k))
    delta_flat = density._delta_from_dists(dists, rho_flat)
    score_flat = rho_flat * delta_flat
    alpha_all = _alpha_rows(dists, config.kernel_bandwidth)

    if config.algo1_literal:
        masks, seed_idx, scope = _literal_loop(score_flat, alpha_all, config)
    else:
        masks, seed_idx, scope = _scope_loop(score_flat, alpha_all, config)

    seeds: list = [(s // grid.w, s % grid.w) for s in seed_idx]
    if scope.max() >= REMAINDER_EPS:
        masks.append(scope)
        seeds.append(REMAINDER)

    stack = MaskStack(
        masks=np.stack(masks).reshape(len(masks), grid.h, grid.w),
        seeds=seeds,
        mode="soft",
        config_used=config,
    )
    if config.assignment == "hard":
        if config.algo1_literal:
            # literal masks are not normalized; one-hot without compaction
            stack = MaskStack(masks=_argmax_onehot(stack.masks), seeds=stack.seeds,
                              mode="hard", config_used=config)
        else:
            stack = harden_masks(stack)
    return stack


def _argmax_onehot(masks: np.ndarray) -> np.ndarray:
    """Per-location one-hot of the argmax mask (ties: lower index)."""
    winners = np.argmax(masks, axis=0)
    out = np.zeros_like(masks)
    k = masks.shape[0]
    out[winners[None, ...] == np.arange(k)[:, None, None]] = 1.0
    return out


def harden_masks(stack: MaskStack) -> MaskStack:
    """One-hot the stack by per-location argmax, dropping masks that win
    nowhere. Requires a soft stack whose per-location sums are ~1.
    """
    if stack.mode != "soft":
        raise MaskModeError("harden_masks expects a soft stack")
    sums = stack.masks.sum(axis=0)
    if np.abs(sums - 1.0).max() > 1e-6:
        raise NotNormalized(
            f"per-location sums deviate from 1 by up to {np.abs(sums - 1.0).max():.3g}"
        )
    onehot = _argmax_onehot(stack.masks)
    support = onehot.sum(axis=(1, 2)) > 0
    kept_masks = onehot[support]
    kept_seeds = [seed for seed, keep in zip(stack.seeds, support) if keep]
    return MaskStack(masks=kept_masks, seeds=kept_seeds, mode="hard",
                     config_used=stack.config_used)


def cluster_count_stats(stacks: list) -> dict:
    """Mean/min/max of the non-remainder cluster count over stacks."""
    if not stacks:
        raise EmptyInput("no stacks given")
    counts = [s.k_clusters for s in stacks]
    return {
        "mean": float(np.mean(counts)),
        "min": int(min(counts)),
        "max": int(max(counts)),
    }
