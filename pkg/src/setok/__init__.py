"""Dynamic grouping of visual feature grids into semantic tokens."""

from . import baselines, clusterer, density, fixtures, merger, metrics, tensor_io
from .clusterer import cluster, cluster_count_stats, distance_kernel, harden_masks
from .density import knn_sq_distances, local_density, min_distance_to_denser, seed_scores
from .errors import SetokError
from .merger import merge_clusters, position_embedding_2d, seeded_weights
from .types import (
    REMAINDER,
    FeatureGrid,
    MaskStack,
    MechanismSpec,
    MergerWeights,
    ReferenceMasks,
    SeedScores,
    TokenizerConfig,
    TokenSet,
)

__version__ = "0.1.0"


def tokenize(grid: FeatureGrid, config: TokenizerConfig | None = None,
             weights: MergerWeights | None = None):
    """Full pipeline: score seeds, cluster, merge. Returns (masks, tokens)."""
    config = config or TokenizerConfig()
    stack = cluster(grid, config)
    if config.merge_mode == "attention" and weights is None:
        weights = seeded_weights(grid.d)
    tokens = merge_clusters(grid, stack, weights=weights, mode=config.merge_mode)
    return stack, tokens
