#!/usr/bin/env python3
"""Compare the numba kernels against the pure-numpy fallback.

Covers the two hot kernels (pairwise distances, KNN reduction) and the
end-to-end tokenize path across grid sizes. The backends are bitwise
identical, so only speed differs.

Run: python benchmarks/bench_kernels.py [--repeats N]
"""
import argparse
import time

import numpy as np

import setok
from setok import _kernels
from setok.types import FeatureGrid, TokenizerConfig


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best * 1000.0


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not _kernels._HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    _kernels.warmup()
    rng = np.random.default_rng(0)
    sizes = [(8, 8, 16), (16, 16, 32), (24, 24, 64), (32, 32, 64)]

    print(f"{'case':<28}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    print("-" * 57)
    for h, w, d in sizes:
        feats = np.ascontiguousarray(rng.normal(size=(h * w, d)))
        grid = FeatureGrid.from_array(rng.normal(size=(h, w, d)).astype(np.float32))
        k = 9

        dists = _kernels._pairwise_sq_dists_nb(feats)
        cases = [
            (f"pairwise {h}x{w}x{d}",
             lambda: _kernels._pairwise_sq_dists_nb(feats),
             lambda: _kernels._pairwise_sq_dists_np(feats)),
            (f"knn mean {h}x{w} K={k}",
             lambda: _kernels._knn_mean_sq_nb(dists, k),
             lambda: _kernels._knn_mean_sq_np(dists, k)),
        ]
        for name, nb, np_ in cases:
            assert (nb() == np_()).all()
            t_nb = timeit(nb, args.repeats)
            t_np = timeit(np_, args.repeats)
            print(f"{name:<28}{t_nb:>10.2f}{t_np:>10.2f}{t_np / t_nb:>8.2f}x")

        cfg = TokenizerConfig()
        setok.tokenize(grid, cfg)  # warm both paths once

        _kernels.NUMBA_ENABLED = True
        t_nb = timeit(lambda: setok.tokenize(grid, cfg), args.repeats)
        _kernels.NUMBA_ENABLED = False
        t_np = timeit(lambda: setok.tokenize(grid, cfg), args.repeats)
        _kernels.NUMBA_ENABLED = True
        print(f"{'tokenize ' + f'{h}x{w}x{d}':<28}{t_nb:>10.2f}{t_np:>10.2f}"
              f"{t_np / t_nb:>8.2f}x")
        print()


if __name__ == "__main__":
    main()
