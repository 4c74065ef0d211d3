"""Pool each cluster's member features into a single token.

Pipeline per mask: add 2D sinusoidal position embeddings, scale by the
mask, flatten members in raster order, run the stacked self-attention
blocks (pre-norm, two heads, ReLU feed-forward), average over members.
Weights are inference-only: seeded random or loaded from a bundle.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import tensor_io
from .errors import BadDim, EmptyCluster, IoFailure, ShapeMismatch
from .types import (
    AttentionBlockWeights,
    FeatureGrid,
    MaskStack,
    MergerWeights,
    TokenSet,
)

_LN_EPS = 1e-5
SOFT_MEMBER_EPS = 1e-3  # soft-mode membership cutoff


def position_embedding_2d(h: int, w: int, d: int) -> np.ndarray:
    """Fixed sinusoidal embedding: first d/2 channels encode the row
    index, last d/2 the column, each half alternating sin/cos over
    geometric frequencies (base 10000). Depends only on (i, j, d).
    """
    if d % 4 != 0:
        raise BadDim(f"d must be divisible by 4, got {d}")
    half = d // 2
    freqs = 1.0 / np.power(10000.0, np.arange(0, half, 2, dtype=np.float64) / half)
    out = np.zeros((h, w, d), dtype=np.float64)
    rows = np.arange(h, dtype=np.float64)[:, None] * freqs[None, :]  # (h, half/2)
    cols = np.arange(w, dtype=np.float64)[:, None] * freqs[None, :]
    out[:, :, 0:half:2] = np.sin(rows)[:, None, :]
    out[:, :, 1:half:2] = np.cos(rows)[:, None, :]
    out[:, :, half::2] = np.sin(cols)[None, :, :]
    out[:, :, half + 1 :: 2] = np.cos(cols)[None, :, :]
    return out


def gather_cluster_sequence(
    grid: FeatureGrid, mask: np.ndarray, mode: str, use_pe: bool = True
):
    """Member rows (PE(X) + X) * mask in raster order, plus their
    locations. Hard mode takes mask == 1; soft mode takes mask >
    SOFT_MEMBER_EPS with rows scaled by the mask value.
    """
    if mask.shape != (grid.h, grid.w):
        raise ShapeMismatch(f"mask shape {mask.shape} != grid ({grid.h}, {grid.w})")
    feats = grid.data.astype(np.float64)
    if use_pe:
        feats = feats + position_embedding_2d(grid.h, grid.w, grid.d)
    if mode == "hard":
        member = mask == 1.0
    else:
        member = mask > SOFT_MEMBER_EPS
    ii, jj = np.nonzero(member)  # np.nonzero is raster (row-major) ordered
    if ii.size == 0:
        raise EmptyCluster("mask selects no locations")
    rows = feats[ii, jj] * mask[ii, jj][:, None]
    locations = list(zip(ii.tolist(), jj.tolist()))
    return rows, locations


def _layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + _LN_EPS) * gamma + beta


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def attention_block_forward(seq: np.ndarray, block: AttentionBlockWeights,
                            heads: int = 2) -> np.ndarray:
    """Pre-norm block: x + SelfAttn(LN(x)), then + FFN(LN(.))."""
    if seq.ndim != 2 or seq.shape[1] != block.w_q.shape[0]:
        raise ShapeMismatch(
            f"sequence shape {seq.shape} incompatible with d={block.w_q.shape[0]}"
        )
    n, d = seq.shape
    if d % heads != 0:
        raise ShapeMismatch(f"d={d} not divisible by {heads} heads")
    hd = d // heads

    x = _layer_norm(seq, block.ln1_gamma, block.ln1_beta)
    q = (x @ block.w_q + block.b_q).reshape(n, heads, hd)
    k = (x @ block.w_k + block.b_k).reshape(n, heads, hd)
    v = (x @ block.w_v + block.b_v).reshape(n, heads, hd)
    # (heads, n, n) attention over the member rows
    logits = np.einsum("nhc,mhc->hnm", q, k) / np.sqrt(hd)
    attn = _softmax(logits)
    ctx = np.einsum("hnm,mhc->nhc", attn, v).reshape(n, d)
    y = seq + ctx @ block.w_o + block.b_o

    z = _layer_norm(y, block.ln2_gamma, block.ln2_beta)
    ff = np.maximum(z @ block.w_ff1 + block.b_ff1, 0.0) @ block.w_ff2 + block.b_ff2
    return y + ff


def seeded_weights(d: int, n_blocks: int = 2, heads: int = 2, ffn_dim: int | None = None,
                   seed: int = 0) -> MergerWeights:
    """Deterministic random weights (normal, 0.02 scale; zero biases,
    unit layer norms). Draw order per block: Wq, Wk, Wv, Wo, Wff1, Wff2.
    """
    if d % heads != 0:
        raise BadDim(f"d={d} not divisible by {heads} heads")
    ffn_dim = ffn_dim or 4 * d
    rng = np.random.default_rng(seed)
    blocks = []
    for _ in range(n_blocks):
        mats = [rng.normal(0.0, 0.02, size=s)
                for s in [(d, d), (d, d), (d, d), (d, d), (d, ffn_dim), (ffn_dim, d)]]
        blocks.append(AttentionBlockWeights(
            w_q=mats[0], w_k=mats[1], w_v=mats[2], w_o=mats[3],
            b_q=np.zeros(d), b_k=np.zeros(d), b_v=np.zeros(d), b_o=np.zeros(d),
            ln1_gamma=np.ones(d), ln1_beta=np.zeros(d),
            ln2_gamma=np.ones(d), ln2_beta=np.zeros(d),
            w_ff1=mats[4], b_ff1=np.zeros(ffn_dim),
            w_ff2=mats[5], b_ff2=np.zeros(d),
        ))
    return MergerWeights(dim=d, heads=heads, ffn_dim=ffn_dim, blocks=blocks)


def zeroed_weights(d: int, n_blocks: int = 2, heads: int = 2,
                   ffn_dim: int | None = None) -> MergerWeights:
    """Weights whose attention and FFN contributions vanish, so every
    block is the identity map; used to isolate the pooling path.
    """
    w = seeded_weights(d, n_blocks=n_blocks, heads=heads, ffn_dim=ffn_dim, seed=0)
    for b in w.blocks:
        b.w_o = np.zeros_like(b.w_o)
        b.b_o = np.zeros_like(b.b_o)
        b.w_ff2 = np.zeros_like(b.w_ff2)
        b.b_ff2 = np.zeros_like(b.b_ff2)
    return w


_TENSOR_FIELDS = [
    "w_q", "w_k", "w_v", "w_o", "b_q", "b_k", "b_v", "b_o",
    "ln1_gamma", "ln1_beta", "ln2_gamma", "ln2_beta",
    "w_ff1", "b_ff1", "w_ff2", "b_ff2",
]


def save_weights(weights: MergerWeights, bundle_dir) -> None:
    """Persist as a directory of rank-2 tensors plus a JSON manifest."""
    bundle = Path(bundle_dir)
    bundle.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": 1,
        "blocks": weights.n_blocks,
        "heads": weights.heads,
        "dim": weights.dim,
        "ffn_dim": weights.ffn_dim,
    }
    for bi, block in enumerate(weights.blocks):
        for name in _TENSOR_FIELDS:
            arr = np.atleast_2d(getattr(block, name))
            tensor_io.write_array(bundle / f"block{bi}.{name}.setk", arr)
    (bundle / "manifest.json").write_text(json.dumps(manifest, sort_keys=True))


def load_weights(bundle_dir) -> MergerWeights:
    bundle = Path(bundle_dir)
    manifest_path = bundle / "manifest.json"
    if not manifest_path.exists():
        raise IoFailure(f"no manifest.json in {bundle}")
    manifest = json.loads(manifest_path.read_text())
    blocks = []
    for bi in range(manifest["blocks"]):
        fields = {}
        for name in _TENSOR_FIELDS:
            arr = tensor_io.read_array(bundle / f"block{bi}.{name}.setk").astype(np.float64)
            if name.startswith(("b_", "ln")):
                arr = arr.reshape(-1)
            fields[name] = arr
        blocks.append(AttentionBlockWeights(**fields))
    return MergerWeights(dim=manifest["dim"], heads=manifest["heads"],
                         ffn_dim=manifest["ffn_dim"], blocks=blocks)


def merge_clusters(
    grid: FeatureGrid,
    stack: MaskStack,
    weights: MergerWeights | None = None,
    mode: str = "attention",
    use_pe: bool = True,
) -> TokenSet:
    """One token per mask.

    Attention mode runs the gathered rows through the blocks then takes
    the plain mean; mean mode takes the mask-weighted mean of the
    gathered rows directly. Masks that select no members are skipped and
    recorded instead of raising.
    """
    if mode not in ("attention", "mean"):
        raise ShapeMismatch(f"unknown merge mode {mode!r}")
    if mode == "attention" and weights is None:
        weights = seeded_weights(grid.d)
    if weights is not None and weights.dim != grid.d:
        raise ShapeMismatch(f"weights dim {weights.dim} != grid d {grid.d}")

    tokens = []
    sources = []
    skipped = []
    for mi in range(stack.k):
        try:
            rows, locations = gather_cluster_sequence(
                grid, stack.masks[mi], stack.mode, use_pe=use_pe
            )
        except EmptyCluster:
            skipped.append((mi, "empty cluster"))
            continue
        if mode == "attention":
            out = rows
            for block in weights.blocks:
                out = attention_block_forward(out, block, heads=weights.heads)
            token = out.mean(axis=0)
        else:
            weight_sum = stack.masks[mi][tuple(np.array(locations).T)].sum()
            token = rows.sum(axis=0) / weight_sum
        tokens.append(token)
        sources.append(locations)

    return TokenSet(
        tokens=np.stack(tokens) if tokens else np.zeros((0, grid.d)),
        sources=sources,
        grid_dims=(grid.h, grid.w, grid.d),
        skipped=skipped,
    )
