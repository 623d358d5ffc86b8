#!/usr/bin/env python3
"""Benchmark the compiled vs pure-numpy min-distance kernels.

Simulates what one farthest-traversal selection round costs: seed the cache
with a labeled set, then run a sequence of update+argmax picks over a large
pool.  Also reports the largest deviation between the two backends.

Usage: python benchmarks/bench_distance.py [--n 20000] [--dim 256] [--picks 200]
"""

import argparse
import time

import numpy as np

from bioal.distance import (
    MinDistCache,
    argmax_min_dist,
    compiled_available,
    update_cache,
)


def run_backend(backend: str, pool: np.ndarray, seed_set, picks: int):
    start = time.perf_counter()
    cache = MinDistCache(pool, seed_set, backend=backend)
    seed_time = time.perf_counter() - start

    mask = np.ones(pool.shape[0], dtype=bool)
    mask[list(seed_set)] = False
    chosen = []
    start = time.perf_counter()
    for _ in range(picks):
        idx = argmax_min_dist(cache, mask)
        chosen.append(idx)
        mask[idx] = False
        update_cache(cache, pool, idx)
    pick_time = time.perf_counter() - start
    return seed_time, pick_time, chosen, cache.min_dist.copy()


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=20000, help="pool size")
    parser.add_argument("--dim", type=int, default=256, help="embedding dimension")
    parser.add_argument("--picks", type=int, default=200, help="greedy picks to time")
    parser.add_argument("--seed-size", type=int, default=50, help="initial selected set size")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    pool = rng.standard_normal((args.n, args.dim))
    seed_set = list(rng.choice(args.n, size=args.seed_size, replace=False))

    backends = ["python"]
    if compiled_available():
        backends.insert(0, "compiled")
    else:
        print("compiled extension not built; timing the numpy fallback only")

    results = {}
    for backend in backends:
        seed_time, pick_time, chosen, min_dist = run_backend(backend, pool, seed_set, args.picks)
        results[backend] = (chosen, min_dist)
        per_pick = 1000.0 * pick_time / args.picks
        print(
            f"{backend:>8}: seed({args.seed_size}) {seed_time * 1000:8.1f} ms   "
            f"{args.picks} picks {pick_time * 1000:8.1f} ms   ({per_pick:.2f} ms/pick)"
        )

    if len(results) == 2:
        chosen_c, dist_c = results["compiled"]
        chosen_p, dist_p = results["python"]
        agree = chosen_c == chosen_p
        print(f"identical pick sequences: {agree}")
        print(f"max |min_dist difference|: {np.max(np.abs(dist_c - dist_p)):.3e}")


if __name__ == "__main__":
    main()
