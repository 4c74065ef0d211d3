"""Alternative grouping mechanisms behind one interface.

Covers dynamic hard/soft clustering, score-threshold stopping, a fixed
cluster count, fixed-query cross-attention resampling, and iterative
top-k token merging, so the bench harness can compare their shape and
cluster-count behavior on the same grids. The threshold mechanism
thresholds the seed score (stated in report headers); fixed keeps all k
masks even if one wins no location, so its count is constant by
construction. Resampler and top-k merging emit tokens only: their
groupings have no seed locations, so no MaskStack is claimed.
"""
from __future__ import annotations

import csv
import io
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels, clusterer, density, merger, metrics
from .errors import EmptyInput, MechanismParamError
from .types import (
    FeatureGrid,
    MaskStack,
    MechanismSpec,
    MergerWeights,
    ReferenceMasks,
    TokenizerConfig,
    TokenSet,
)

KINDS = ("dynamic_hard", "dynamic_soft", "threshold", "fixed", "resampler", "topk_merge")


@dataclass
class MechanismResult:
    tokens: TokenSet
    masks: MaskStack | None
    wall_ms: float

    @property
    def k(self) -> int:
        if self.masks is not None:
            return self.masks.k_clusters
        return self.tokens.tokens.shape[0]


def _require(spec: MechanismSpec, key: str, kind_of=(int, float)):
    if key not in spec.params:
        raise MechanismParamError(f"{spec.kind} requires param {key!r}")
    value = spec.params[key]
    if not isinstance(value, kind_of) or isinstance(value, bool):
        raise MechanismParamError(f"{spec.kind} param {key!r} must be numeric, got {value!r}")
    return value


def _validate(spec: MechanismSpec) -> None:
    if spec.kind not in KINDS:
        raise MechanismParamError(f"unknown mechanism kind {spec.kind!r}")
    if spec.kind == "threshold":
        _require(spec, "score_tau")
    elif spec.kind == "fixed":
        k = _require(spec, "k")
        if k < 1:
            raise MechanismParamError(f"fixed k must be >= 1, got {k}")
    elif spec.kind == "resampler":
        q = _require(spec, "n_queries")
        if q < 1:
            raise MechanismParamError(f"resampler n_queries must be >= 1, got {q}")
    elif spec.kind == "topk_merge":
        r = _require(spec, "r")
        if r < 0:
            raise MechanismParamError(f"topk_merge r must be >= 0, got {r}")
        passes = spec.params.get("passes", 1)
        if not isinstance(passes, int) or passes < 0:
            raise MechanismParamError(f"topk_merge passes must be >= 0, got {passes}")


def _merge_tokens(grid, stack, weights, config):
    return merger.merge_clusters(grid, stack, weights=weights, mode=config.merge_mode)


def _threshold_masks(grid: FeatureGrid, score_tau: float, config: TokenizerConfig) -> MaskStack:
    feats = grid.features64()
    dists = _kernels.pairwise_sq_dists(feats)
    rho = np.exp(-_kernels.knn_mean_sq(dists, config.knn_k))
    score = rho * density._delta_from_dists(dists, rho)
    alpha_all = clusterer._alpha_rows(dists, config.kernel_bandwidth)
    masks, seed_idx, scope = clusterer._scope_loop(
        score, alpha_all, config, stop="score", score_tau=score_tau
    )
    seeds: list = [(s // grid.w, s % grid.w) for s in seed_idx]
    if not masks:
        # nothing above the threshold: the whole grid is remainder
        masks = [scope]
        seeds = [clusterer.REMAINDER]
    elif scope.max() >= clusterer.REMAINDER_EPS:
        masks.append(scope)
        seeds.append(clusterer.REMAINDER)
    stack = MaskStack(
        masks=np.stack(masks).reshape(len(masks), grid.h, grid.w),
        seeds=seeds, mode="soft", config_used=config,
    )
    if config.assignment == "hard":
        stack = clusterer.harden_masks(stack)
    return stack


def _fixed_masks(grid: FeatureGrid, k: int, config: TokenizerConfig) -> MaskStack:
    if k > grid.n_locations:
        raise MechanismParamError(f"fixed k={k} exceeds {grid.n_locations} locations")
    feats = grid.features64()
    dists = _kernels.pairwise_sq_dists(feats)
    rho = np.exp(-_kernels.knn_mean_sq(dists, config.knn_k))
    score = rho * density._delta_from_dists(dists, rho)
    order = np.argsort(-score, kind="stable")[:k]  # ties: lower raster index
    # per-location normalized kernel responses, computed as a stable
    # softmax over log-alpha so distant seeds cannot underflow to 0/0
    log_alpha = -dists[order] * (config.kernel_bandwidth * np.log(2.0))  # (k, n)
    shifted = log_alpha - log_alpha.max(axis=0)
    e = np.exp(shifted)
    soft = e / e.sum(axis=0)
    masks = soft.reshape(k, grid.h, grid.w)
    if config.assignment == "hard":
        masks = clusterer._argmax_onehot(masks)  # no compaction: k stays fixed
        mode = "hard"
    else:
        mode = "soft"
    seeds = [(int(s) // grid.w, int(s) % grid.w) for s in order]
    return MaskStack(masks=masks, seeds=seeds, mode=mode, config_used=config)


def _resampler_tokens(grid: FeatureGrid, n_queries: int, seed: int) -> TokenSet:
    feats = grid.features64()
    rng = np.random.default_rng(seed)
    queries = rng.standard_normal((n_queries, grid.d))
    logits = feats @ queries.T / np.sqrt(grid.d)  # (n, q)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    weights = e / e.sum(axis=1, keepdims=True)  # each location splits over queries
    wsum = weights.sum(axis=0)  # (q,)
    tokens = (weights.T @ feats) / wsum[:, None]
    locs = [(i, j) for i in range(grid.h) for j in range(grid.w)]
    assign = np.argmax(weights, axis=1)
    sources = [[locs[li] for li in np.nonzero(assign == q)[0]] for q in range(n_queries)]
    return TokenSet(tokens=tokens, sources=sources, grid_dims=(grid.h, grid.w, grid.d))


def _topk_merge_tokens(grid: FeatureGrid, r: int, passes: int) -> TokenSet:
    feats = grid.features64()
    n = feats.shape[0]
    vectors = [feats[i] for i in range(n)]
    sizes = [1.0] * n
    sources = [[(i // grid.w, i % grid.w)] for i in range(n)]

    for _ in range(passes):
        if r == 0 or len(vectors) < 2:
            break
        mat = np.stack(vectors)
        norms = np.sqrt((mat**2).sum(axis=1))
        safe = np.where(norms > 0, norms, 1.0)
        unit = mat / safe[:, None]
        sim = unit @ unit.T
        m = len(vectors)
        pairs = [(-sim[i, j], i, j) for i in range(m) for j in range(i + 1, m)]
        pairs.sort()
        used = set()
        merged_into: dict[int, int] = {}
        count = 0
        for _, i, j in pairs:
            if count == r:
                break
            if i in used or j in used:
                continue
            used.update((i, j))
            merged_into[j] = i
            count += 1
        if not merged_into:
            break
        for j, i in merged_into.items():
            total = sizes[i] + sizes[j]
            vectors[i] = (vectors[i] * sizes[i] + vectors[j] * sizes[j]) / total
            sizes[i] = total
            sources[i] = sources[i] + sources[j]
        drop = set(merged_into)
        vectors = [v for idx, v in enumerate(vectors) if idx not in drop]
        sizes = [s for idx, s in enumerate(sizes) if idx not in drop]
        sources = [s for idx, s in enumerate(sources) if idx not in drop]

    return TokenSet(tokens=np.stack(vectors), sources=sources,
                    grid_dims=(grid.h, grid.w, grid.d))


def run_mechanism(
    grid: FeatureGrid,
    spec: MechanismSpec,
    config: TokenizerConfig | None = None,
    weights: MergerWeights | None = None,
) -> MechanismResult:
    """Run one mechanism on one grid; wall time covers the whole run."""
    config = config or TokenizerConfig()
    config.validate()
    _validate(spec)
    if weights is None and config.merge_mode == "attention":
        weights = merger.seeded_weights(grid.d)

    start = time.perf_counter()
    stack: MaskStack | None = None
    if spec.kind in ("dynamic_hard", "dynamic_soft"):
        mode = "hard" if spec.kind == "dynamic_hard" else "soft"
        stack = clusterer.cluster(grid, config.with_(assignment=mode))
        tokens = _merge_tokens(grid, stack, weights, config)
    elif spec.kind == "threshold":
        stack = _threshold_masks(grid, float(spec.params["score_tau"]), config)
        tokens = _merge_tokens(grid, stack, weights, config)
    elif spec.kind == "fixed":
        stack = _fixed_masks(grid, int(spec.params["k"]), config)
        tokens = _merge_tokens(grid, stack, weights, config)
    elif spec.kind == "resampler":
        tokens = _resampler_tokens(grid, int(spec.params["n_queries"]),
                                   int(spec.params.get("seed", 0)))
    else:  # topk_merge
        tokens = _topk_merge_tokens(grid, int(spec.params["r"]),
                                    int(spec.params.get("passes", 1)))
    wall_ms = (time.perf_counter() - start) * 1000.0
    return MechanismResult(tokens=tokens, masks=stack, wall_ms=wall_ms)


CSV_COLUMNS = ["mechanism", "avg_k", "min_k", "max_k", "wall_ms_mean", "miou", "dice"]


def bench_mechanisms(
    grids: list,
    specs: list,
    refs: list | None = None,
    config: TokenizerConfig | None = None,
    weights: MergerWeights | None = None,
    max_workers: int | None = None,
) -> dict:
    """Run every spec over every grid; aggregate counts, time, quality.

    Returns {"rows": [...], "csv": str, "table": str}. Rows keep input
    order; grids are processed by a thread pool capped by SETOK_THREADS.
    """
    if not grids or not specs:
        raise EmptyInput("need at least one grid and one spec")
    if refs is not None and len(refs) != len(grids):
        raise EmptyInput(f"{len(refs)} refs for {len(grids)} grids")
    config = config or TokenizerConfig()
    if max_workers is None:
        env = os.environ.get("SETOK_THREADS")
        max_workers = int(env) if env else min(len(grids), os.cpu_count() or 1)
    max_workers = max(1, max_workers)
    if weights is None and config.merge_mode == "attention":
        dims = {g.d for g in grids}
        if len(dims) == 1:
            weights = merger.seeded_weights(dims.pop())

    rows = []
    for spec in specs:
        _validate(spec)

        def one(idx: int) -> MechanismResult:
            return run_mechanism(grids[idx], spec, config=config, weights=weights)

        if max_workers == 1:
            results = [one(i) for i in range(len(grids))]
        else:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                results = list(pool.map(one, range(len(grids))))

        ks = [r.k for r in results]
        row = {
            "mechanism": spec.label(),
            "avg_k": float(np.mean(ks)),
            "min_k": int(min(ks)),
            "max_k": int(max(ks)),
            "wall_ms_mean": float(np.mean([r.wall_ms for r in results])),
            "miou": None,
            "dice": None,
        }
        if refs is not None and all(r.masks is not None for r in results):
            mious = []
            dices = []
            for r, ref in zip(results, refs):
                stack = r.masks
                if stack.mode != "hard":
                    stack = clusterer.harden_masks(stack)
                report = metrics.match_and_miou(stack, ref)
                mious.append(report["mean_iou"])
                hard_ref = metrics.harden_reference(ref)
                dices.append(float(np.mean([
                    metrics.dice_loss(stack.masks[a], hard_ref[b])
                    for a, b in report["pairing"]
                ])))
            row["miou"] = float(np.mean(mious))
            row["dice"] = float(np.mean(dices))
        rows.append(row)

    return {"rows": rows, "csv": _to_csv(rows), "table": _to_table(rows)}


def _fmt(value, spec="{:.6f}") -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return spec.format(value)
    return str(value)


def _to_csv(rows: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([
            row["mechanism"],
            _fmt(row["avg_k"], "{:.4f}"),
            row["min_k"],
            row["max_k"],
            _fmt(row["wall_ms_mean"], "{:.3f}"),
            _fmt(row["miou"]),
            _fmt(row["dice"]),
        ])
    return buf.getvalue()


def _to_table(rows: list) -> str:
    cells = [CSV_COLUMNS]
    for row in rows:
        cells.append([
            row["mechanism"],
            _fmt(row["avg_k"], "{:.2f}"),
            str(row["min_k"]),
            str(row["max_k"]),
            _fmt(row["wall_ms_mean"], "{:.2f}"),
            _fmt(row["miou"], "{:.4f}"),
            _fmt(row["dice"], "{:.4f}"),
        ])
    widths = [max(len(r[i]) for r in cells) for i in range(len(CSV_COLUMNS))]
    lines = []
    for r in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines)
