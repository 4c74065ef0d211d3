"""Command-line entry point.

Machine-readable JSON goes to stdout, human-readable logs to stderr.
Exit codes: 0 success, 2 usage error, 3 data error. Timing fields in
summaries are the only non-deterministic bytes a re-run can produce.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import baselines, clusterer, fixtures, merger, metrics, tensor_io
from .errors import SetokError
from .types import MechanismSpec, TokenizerConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3


def _emit(payload: dict) -> None:
    json.dump(payload, sys.stdout, sort_keys=True)
    sys.stdout.write("\n")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _config_from_args(args) -> TokenizerConfig:
    cfg = TokenizerConfig(
        knn_k=args.knn,
        kernel_bandwidth=args.bandwidth,
        stop_tau=args.stop_tau,
        max_clusters=args.max_clusters,
        assignment=args.mode,
        merge_mode=args.merge,
    )
    cfg.validate()
    return cfg


def _load_weights(args, d: int) -> merger.MergerWeights:
    if args.weights:
        return merger.load_weights(args.weights)
    return merger.seeded_weights(d, seed=args.seed)


def cmd_tokenize(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    grid = tensor_io.load_grid(args.input)
    config = _config_from_args(args)
    stack = clusterer.cluster(grid, config)
    weights = _load_weights(args, grid.d) if config.merge_mode == "attention" else None
    tokens = merger.merge_clusters(grid, stack, weights=weights, mode=config.merge_mode)

    masks_path = out_dir / "masks.setk"
    tokens_path = out_dir / "tokens.setk"
    tensor_io.write_mask_stack(stack, masks_path)
    tensor_io.write_token_set(tokens, tokens_path)
    outputs = {"masks": str(masks_path), "tokens": str(tokens_path)}
    if args.ppm:
        ppm_path = out_dir / "masks.ppm"
        tensor_io.export_mask_image(stack, ppm_path)
        outputs["ppm"] = str(ppm_path)

    remainder_mass = 0.0
    if stack.has_remainder:
        remainder_mass = float(stack.masks[-1].sum())
    _emit({
        "command": "tokenize",
        "k": stack.k_clusters,
        "remainder_mass": remainder_mass,
        "n_tokens": int(tokens.tokens.shape[0]),
        "outputs": outputs,
        "wall_ms": round((time.perf_counter() - t0) * 1000.0, 3),
    })
    return EXIT_OK


def cmd_merge(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    grid = tensor_io.load_grid(args.input)
    stack = tensor_io.load_mask_stack(args.masks)
    weights = _load_weights(args, grid.d) if args.merge == "attention" else None
    tokens = merger.merge_clusters(grid, stack, weights=weights, mode=args.merge)
    tokens_path = out_dir / "tokens.setk"
    tensor_io.write_token_set(tokens, tokens_path)
    _emit({
        "command": "merge",
        "n_tokens": int(tokens.tokens.shape[0]),
        "outputs": {"tokens": str(tokens_path)},
        "wall_ms": round((time.perf_counter() - t0) * 1000.0, 3),
    })
    return EXIT_OK


def _load_reference(path) -> metrics.ReferenceMasks:
    arr = tensor_io.read_array(path)
    if arr.ndim != 3:
        raise SetokError(f"reference masks must be rank 3, got {arr.ndim}")
    return metrics.ReferenceMasks(pi=arr.astype(np.float64))


def cmd_metrics(args) -> int:
    stack = tensor_io.load_mask_stack(args.input)
    refs = _load_reference(args.ref)
    report = metrics.evaluate(stack, refs)
    report["command"] = "metrics"
    _emit(report)
    return EXIT_OK


def _parse_specs(raw: str) -> list:
    text = raw.strip()
    if not (text.startswith("[") or text.startswith("{")):
        text = Path(raw).read_text()
    parsed = json.loads(text)
    if isinstance(parsed, dict):
        parsed = [parsed]
    specs = []
    for entry in parsed:
        kind = entry.pop("kind", None)
        if kind is None:
            raise SetokError(f"mechanism spec missing 'kind': {entry}")
        specs.append(MechanismSpec(kind=kind, params=entry))
    return specs


def _collect_bench_inputs(input_path: str):
    root = Path(input_path)
    grids = []
    refs = []
    if root.is_dir():
        grid_files = sorted(root.rglob("grid.setk"))
        if not grid_files:
            grid_files = sorted(root.glob("*.setk"))
        for gf in grid_files:
            grids.append(tensor_io.load_grid(gf))
            ref_file = gf.parent / "ref.setk"
            refs.append(_load_reference(ref_file) if ref_file.exists() else None)
    else:
        grids.append(tensor_io.load_grid(root))
        refs.append(None)
    if any(r is None for r in refs):
        refs = None
    return grids, refs


def cmd_bench(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grids, refs = _collect_bench_inputs(args.input)
    specs = _parse_specs(args.spec)
    config = _config_from_args(args)
    weights = merger.load_weights(args.weights) if args.weights else None
    report = baselines.bench_mechanisms(grids, specs, refs=refs, config=config,
                                        weights=weights)
    csv_path = out_dir / "bench.csv"
    csv_path.write_text(report["csv"])
    _log("threshold mechanism thresholds the seed score (rho * delta)")
    _log(report["table"])
    _emit({
        "command": "bench",
        "csv": str(csv_path),
        "n_grids": len(grids),
        "rows": report["rows"],
    })
    return EXIT_OK


def cmd_gen_fixture(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid, refs, labels, meta = fixtures.make_fixture(
        h=args.h, w=args.w, d=args.d, blobs=args.blobs, sep=args.sep, seed=args.seed
    )
    grid_path = out_dir / "grid.setk"
    ref_path = out_dir / "ref.setk"
    tensor_io.write_grid(grid, grid_path)
    tensor_io.write_array(ref_path, refs.pi.astype(np.float32))
    (out_dir / "meta.json").write_text(json.dumps(meta, sort_keys=True))
    _emit({
        "command": "gen-fixture",
        "outputs": {"grid": str(grid_path), "ref": str(ref_path),
                    "meta": str(out_dir / "meta.json")},
        "blobs": args.blobs,
        "min_sep": meta["min_sep"],
    })
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="setok",
        description="Group a visual feature grid into a variable number of semantic tokens.",
        allow_abbrev=False,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--knn", type=int, default=9, help="K for the density estimate")
        p.add_argument("--bandwidth", type=float, default=4.0, help="distance kernel bandwidth")
        p.add_argument("--stop-tau", type=float, default=0.05, dest="stop_tau",
                       help="stop once the max remaining scope falls below this")
        p.add_argument("--max-clusters", type=int, default=64, dest="max_clusters")
        p.add_argument("--mode", choices=["hard", "soft"], default="hard")
        p.add_argument("--merge", choices=["attention", "mean"], default="attention")
        p.add_argument("--weights", default=None, help="merger weight bundle directory")
        p.add_argument("--seed", type=int, default=0, help="seed for generated weights")

    p_tok = sub.add_parser("tokenize", help="grid -> masks + tokens")
    p_tok.add_argument("--input", required=True, help="input grid (.setk)")
    p_tok.add_argument("--out-dir", required=True, dest="out_dir")
    p_tok.add_argument("--ppm", action="store_true", help="also write an argmax color preview")
    add_config_flags(p_tok)
    p_tok.set_defaults(func=cmd_tokenize)

    p_merge = sub.add_parser("merge", help="grid + masks -> tokens")
    p_merge.add_argument("--input", required=True, help="input grid (.setk)")
    p_merge.add_argument("--masks", required=True, help="mask stack (.setk with sidecar)")
    p_merge.add_argument("--out-dir", required=True, dest="out_dir")
    p_merge.add_argument("--merge", choices=["attention", "mean"], default="attention")
    p_merge.add_argument("--weights", default=None)
    p_merge.add_argument("--seed", type=int, default=0)
    p_merge.set_defaults(func=cmd_merge)

    p_met = sub.add_parser("metrics", help="compare predicted masks to references")
    p_met.add_argument("--input", required=True, help="predicted mask stack (.setk)")
    p_met.add_argument("--ref", required=True, help="reference masks (.setk, h x w x n)")
    p_met.set_defaults(func=cmd_metrics)

    p_bench = sub.add_parser("bench", help="compare clustering mechanisms")
    p_bench.add_argument("--input", required=True,
                         help="grid file or directory of fixture dirs")
    p_bench.add_argument("--out-dir", required=True, dest="out_dir")
    p_bench.add_argument("--spec", required=True,
                         help="mechanism specs: inline JSON or a path to a JSON file")
    add_config_flags(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    p_gen = sub.add_parser("gen-fixture", help="write a seeded blob fixture")
    p_gen.add_argument("--out-dir", required=True, dest="out_dir")
    p_gen.add_argument("--blobs", type=int, required=True)
    p_gen.add_argument("--h", type=int, default=16)
    p_gen.add_argument("--w", type=int, default=16)
    p_gen.add_argument("--d", type=int, default=8)
    p_gen.add_argument("--sep", type=float, default=10.0)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.set_defaults(func=cmd_gen_fixture)

    return parser


def main(argv: list | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors and 0 on --help
        return int(e.code) if e.code is not None else EXIT_OK
    try:
        return args.func(args)
    except SetokError as e:
        _log(f"error [{args.command}]: {e}")
        return EXIT_DATA
    except (OSError, json.JSONDecodeError) as e:
        _log(f"error [{args.command}]: {e}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
