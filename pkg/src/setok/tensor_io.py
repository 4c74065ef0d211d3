"""Bit-exact binary I/O for grids, masks, and tokens.

File layout (SETK): magic ``b"SETK"``, u16 version (=1), u16 rank,
rank x u32 dims, then little-endian float32 payload in row-major order.
Rank 2 holds masks and score maps, rank 3 holds grids and mask stacks.
Mask stacks and token sets carry sidecar JSON metadata next to the
tensor file. Mask previews are written as binary PPM (P6, maxval 255).
"""
from __future__ import annotations

import colorsys
import json
import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    IoFailure,
    NonFiniteValue,
    RankMismatch,
    TruncatedPayload,
    UnsupportedVersion,
)
from .types import REMAINDER, FeatureGrid, MaskStack, TokenizerConfig, TokenSet

MAGIC = b"SETK"
VERSION = 1

_OFF_MAGIC = 0
_OFF_VERSION = 4
_OFF_RANK = 6
_OFF_DIMS = 8


def _header_size(rank: int) -> int:
    return _OFF_DIMS + 4 * rank


def read_array(path) -> np.ndarray:
    """Read one SETK tensor; returns a float32 array of rank 2 or 3."""
    try:
        buf = Path(path).read_bytes()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e

    if len(buf) < _OFF_VERSION or buf[:4] != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}", offset=_OFF_MAGIC)
    if len(buf) < _OFF_RANK:
        raise TruncatedPayload("header ends inside version field", offset=len(buf))
    (version,) = struct.unpack_from("<H", buf, _OFF_VERSION)
    if version != VERSION:
        raise UnsupportedVersion(f"version {version}, expected {VERSION}", offset=_OFF_VERSION)
    if len(buf) < _OFF_DIMS:
        raise TruncatedPayload("header ends inside rank field", offset=len(buf))
    (rank,) = struct.unpack_from("<H", buf, _OFF_RANK)
    if rank not in (2, 3):
        raise RankMismatch(f"rank {rank} not in {{2, 3}}", offset=_OFF_RANK)
    hsize = _header_size(rank)
    if len(buf) < hsize:
        raise TruncatedPayload("header ends inside dims field", offset=len(buf))
    dims = struct.unpack_from(f"<{rank}I", buf, _OFF_DIMS)
    for i, dim in enumerate(dims):
        if dim == 0:
            raise RankMismatch(f"dimension {i} is zero", offset=_OFF_DIMS + 4 * i)

    count = int(np.prod(dims, dtype=np.int64))
    expected = hsize + 4 * count
    if len(buf) < expected:
        raise TruncatedPayload(
            f"payload holds {(len(buf) - hsize) // 4} of {count} values", offset=len(buf)
        )
    if len(buf) > expected:
        raise TruncatedPayload(
            f"{len(buf) - expected} trailing bytes after payload", offset=expected
        )

    flat = np.frombuffer(buf, dtype="<f4", count=count, offset=hsize)
    finite = np.isfinite(flat)
    if not finite.all():
        bad = int(np.argmin(finite))
        raise NonFiniteValue(f"value #{bad} is {flat[bad]}", offset=hsize + 4 * bad)
    return flat.reshape(dims).astype(np.float32)


def write_array(path, arr: np.ndarray) -> None:
    """Write a rank-2/3 float array as a SETK tensor."""
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    if arr.ndim not in (2, 3):
        raise RankMismatch(f"rank {arr.ndim} not in {{2, 3}}", offset=_OFF_RANK)
    for i, dim in enumerate(arr.shape):
        if dim == 0:
            raise RankMismatch(f"dimension {i} is zero", offset=_OFF_DIMS + 4 * i)
    if not np.isfinite(arr).all():
        flat = arr.reshape(-1)
        bad = int(np.argmin(np.isfinite(flat)))
        raise NonFiniteValue(
            f"value #{bad} is {flat[bad]}", offset=_header_size(arr.ndim) + 4 * bad
        )
    header = MAGIC + struct.pack("<HH", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = arr.astype("<f4").tobytes(order="C")
    try:
        Path(path).write_bytes(header + payload)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def load_grid(path) -> FeatureGrid:
    arr = read_array(path)
    if arr.ndim != 3:
        raise RankMismatch(f"grid requires rank 3, file has rank {arr.ndim}", offset=_OFF_RANK)
    h, w, d = arr.shape
    return FeatureGrid(h=h, w=w, d=d, data=arr)


def write_grid(grid: FeatureGrid, path) -> None:
    if grid.h < 1 or grid.w < 1 or grid.d < 1:
        raise RankMismatch(
            f"grid dims must be positive, got ({grid.h}, {grid.w}, {grid.d})", offset=_OFF_DIMS
        )
    data = np.ascontiguousarray(grid.data, dtype=np.float32)
    if data.shape != (grid.h, grid.w, grid.d):
        raise RankMismatch(
            f"data shape {data.shape} disagrees with dims ({grid.h}, {grid.w}, {grid.d})",
            offset=_OFF_DIMS,
        )
    write_array(path, data)


def _sidecar_path(path) -> Path:
    p = Path(path)
    return p.with_suffix(".meta.jsonl")


def write_mask_stack(stack: MaskStack, path) -> None:
    """Rank-3 SETK tensor plus a JSON-lines sidecar (mode, config, seeds)."""
    write_array(path, stack.masks.astype(np.float32))
    lines = [json.dumps({"mode": stack.mode, "config": stack.config_used.to_dict()},
                        sort_keys=True)]
    for i, seed in enumerate(stack.seeds):
        entry = {"index": i, "seed": REMAINDER if seed == REMAINDER else list(seed)}
        lines.append(json.dumps(entry, sort_keys=True))
    try:
        _sidecar_path(path).write_text("\n".join(lines) + "\n")
    except OSError as e:
        raise IoFailure(f"cannot write sidecar for {path}: {e}") from e


def load_mask_stack(path) -> MaskStack:
    arr = read_array(path)
    if arr.ndim != 3:
        raise RankMismatch(f"mask stack requires rank 3, got {arr.ndim}", offset=_OFF_RANK)
    sidecar = _sidecar_path(path)
    if sidecar.exists():
        lines = sidecar.read_text().splitlines()
        head = json.loads(lines[0])
        mode = head["mode"]
        config = TokenizerConfig.from_dict(head["config"])
        seeds = []
        for line in lines[1:]:
            entry = json.loads(line)
            seed = entry["seed"]
            seeds.append(REMAINDER if seed == REMAINDER else (seed[0], seed[1]))
    else:
        mode = "soft"
        config = TokenizerConfig()
        seeds = [(0, 0)] * arr.shape[0]
    return MaskStack(masks=arr.astype(np.float64), seeds=seeds, mode=mode, config_used=config)


def write_token_set(tokens: TokenSet, path) -> None:
    """Rank-2 SETK tensor plus a JSON sources sidecar."""
    write_array(path, tokens.tokens.astype(np.float32))
    meta = {
        "grid_dims": list(tokens.grid_dims),
        "sources": [[list(loc) for loc in src] for src in tokens.sources],
        "skipped": [[int(i), reason] for i, reason in tokens.skipped],
    }
    side = Path(path).with_suffix(".sources.json")
    try:
        side.write_text(json.dumps(meta, sort_keys=True))
    except OSError as e:
        raise IoFailure(f"cannot write sidecar for {path}: {e}") from e


def load_token_set(path) -> TokenSet:
    arr = read_array(path)
    if arr.ndim != 2:
        raise RankMismatch(f"token set requires rank 2, got {arr.ndim}", offset=_OFF_RANK)
    side = Path(path).with_suffix(".sources.json")
    sources: list = [[] for _ in range(arr.shape[0])]
    grid_dims = (0, 0, arr.shape[1])
    skipped: list = []
    if side.exists():
        meta = json.loads(side.read_text())
        grid_dims = tuple(meta["grid_dims"])
        sources = [[(i, j) for i, j in src] for src in meta["sources"]]
        skipped = [(i, reason) for i, reason in meta["skipped"]]
    return TokenSet(tokens=arr.astype(np.float64), sources=sources,
                    grid_dims=grid_dims, skipped=skipped)


def palette_color(index: int) -> tuple:
    """Deterministic palette: golden-angle hue rotation from hue 0."""
    hue = (index * 0.6180339887498949) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.65, 0.95)
    return (round(r * 255), round(g * 255), round(b * 255))


def export_mask_image(stack: MaskStack, path) -> None:
    """Argmax-colored preview of a mask stack as binary PPM (P6)."""
    if stack.k == 0:
        raise EmptyStackForImage()
    k, h, w = stack.masks.shape
    winners = np.argmax(stack.masks, axis=0)  # ties -> lower mask index
    colors = np.array([palette_color(i) for i in range(k)], dtype=np.uint8)
    pixels = colors[winners.reshape(-1)]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    try:
        Path(path).write_bytes(header + pixels.tobytes())
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


class EmptyStackForImage(IoFailure):
    def __init__(self):
        super().__init__("mask stack is empty; nothing to render")
