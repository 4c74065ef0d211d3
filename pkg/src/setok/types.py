"""Domain types passed between the tokenizer stages.

Arrays are float32 on disk and float64 in memory (cast once at the
boundary); dataclasses stay light and are validated by the operations
that consume them.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError

# Marker used in MaskStack.seeds for the appended final-scope mask.
REMAINDER = "REMAINDER"


@dataclass
class FeatureGrid:
    """An h x w x d field of finite 32-bit features."""

    h: int
    w: int
    d: int
    data: np.ndarray  # (h, w, d) float32, row-major

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "FeatureGrid":
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if arr.ndim != 3:
            raise ValueError(f"expected a 3-D array, got ndim={arr.ndim}")
        h, w, d = arr.shape
        return cls(h=h, w=w, d=d, data=arr)

    @property
    def n_locations(self) -> int:
        return self.h * self.w

    def features64(self) -> np.ndarray:
        """Features flattened to (h*w, d) float64 in raster order."""
        return self.data.reshape(self.n_locations, self.d).astype(np.float64)


@dataclass
class SeedScores:
    """Per-location density, distance-to-denser, and their product."""

    rho: np.ndarray  # (h, w), values in (0, 1]
    delta: np.ndarray  # (h, w), nonnegative
    score: np.ndarray  # (h, w), rho * delta
    knn_k: int


@dataclass
class TokenizerConfig:
    knn_k: int = 9
    kernel_bandwidth: float = 4.0
    stop_tau: float = 0.05
    max_clusters: int = 64
    assignment: str = "hard"  # {"hard", "soft"}
    merge_mode: str = "attention"  # {"attention", "mean"}
    algo1_literal: bool = False

    def validate(self) -> None:
        if self.knn_k < 1:
            raise ConfigError(f"knn_k must be positive, got {self.knn_k}")
        if not self.kernel_bandwidth > 0:
            raise ConfigError(f"kernel_bandwidth must be positive, got {self.kernel_bandwidth}")
        if not (0.0 < self.stop_tau < 1.0):
            raise ConfigError(f"stop_tau must lie in (0, 1), got {self.stop_tau}")
        if self.max_clusters < 1:
            raise ConfigError(f"max_clusters must be >= 1, got {self.max_clusters}")
        if self.assignment not in ("hard", "soft"):
            raise ConfigError(f"assignment must be 'hard' or 'soft', got {self.assignment!r}")
        if self.merge_mode not in ("attention", "mean"):
            raise ConfigError(f"merge_mode must be 'attention' or 'mean', got {self.merge_mode!r}")

    def with_(self, **kw) -> "TokenizerConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "knn_k": self.knn_k,
            "kernel_bandwidth": self.kernel_bandwidth,
            "stop_tau": self.stop_tau,
            "max_clusters": self.max_clusters,
            "assignment": self.assignment,
            "merge_mode": self.merge_mode,
            "algo1_literal": self.algo1_literal,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TokenizerConfig":
        cfg = cls(**{k: d[k] for k in d if k in cls.__dataclass_fields__})
        cfg.validate()
        return cfg


@dataclass
class MaskStack:
    """k masks over the grid plus where each came from.

    seeds[i] is the (row, col) seed location of mask i, or the
    REMAINDER marker for the appended final-scope mask (at most one,
    always last).
    """

    masks: np.ndarray  # (k, h, w) float64 in [0, 1]
    seeds: list  # k entries: (i, j) tuples or REMAINDER
    mode: str  # {"hard", "soft"}
    config_used: TokenizerConfig

    @property
    def k(self) -> int:
        return self.masks.shape[0]

    @property
    def k_clusters(self) -> int:
        """Mask count excluding the remainder mask."""
        return self.k - (1 if self.has_remainder else 0)

    @property
    def has_remainder(self) -> bool:
        return len(self.seeds) > 0 and self.seeds[-1] == REMAINDER


@dataclass
class TokenSet:
    """One vector per cluster plus the member locations it pooled."""

    tokens: np.ndarray  # (k, d) float64
    sources: list  # per-token list of (i, j) member locations
    grid_dims: tuple  # (h, w, d)
    skipped: list = field(default_factory=list)  # (mask_index, reason) records


@dataclass
class AttentionBlockWeights:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    b_q: np.ndarray
    b_k: np.ndarray
    b_v: np.ndarray
    b_o: np.ndarray
    ln1_gamma: np.ndarray
    ln1_beta: np.ndarray
    ln2_gamma: np.ndarray
    ln2_beta: np.ndarray
    w_ff1: np.ndarray
    b_ff1: np.ndarray
    w_ff2: np.ndarray
    b_ff2: np.ndarray


@dataclass
class MergerWeights:
    """Inference-only weights for the stacked attention blocks.

    Two heads per block; feed-forward uses ReLU. Generated from a seed
    or loaded from a bundle directory (tensor files plus a manifest).
    """

    dim: int
    heads: int
    ffn_dim: int
    blocks: list  # list[AttentionBlockWeights]

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)


@dataclass
class ReferenceMasks:
    """Ground-truth soft masks; per-location probabilities sum to one."""

    pi: np.ndarray  # (h, w, n) float64 in [0, 1]
    labels: list | None = None

    @property
    def n(self) -> int:
        return self.pi.shape[2]


@dataclass
class MechanismSpec:
    """A clustering mechanism plus its kind-specific parameters."""

    kind: str  # {dynamic_hard, dynamic_soft, threshold, fixed, resampler, topk_merge}
    params: dict = field(default_factory=dict)

    def label(self) -> str:
        if not self.params:
            return self.kind
        inner = ",".join(f"{k}={self.params[k]}" for k in sorted(self.params))
        return f"{self.kind}({inner})"
