"""Cosine-distance kernels and the incremental min-distance cache.

Greedy farthest traversal needs, at every pick, the minimum cosine distance
from each pool sample to the selected set.  Recomputing that from scratch is
O(|S| * N * D) per pick; the cache keeps the running minimum so each pick
costs one O(N * D) update.  No N x N matrix is ever materialized.

The update kernel has two interchangeable backends: a compiled Cython
extension (built at install time) and a pure-numpy fallback.  The compiled
one is used when importable; set ``BIOAL_DISTANCE_BACKEND=python`` or
``=compiled`` to force a choice.  ``benchmarks/bench_distance.py`` compares
the two.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ConfigError

try:
    from . import _mindist as _compiled
except ImportError:  # extension not built; numpy fallback below
    _compiled = None

ZERO_NORM_EPS = 1e-12

BACKEND_COMPILED = "compiled"
BACKEND_PYTHON = "python"


def compiled_available() -> bool:
    return _compiled is not None


def resolve_backend(backend: str | None = None) -> str:
    """Pick the kernel backend: explicit argument > env var > compiled if built."""
    choice = backend or os.environ.get("BIOAL_DISTANCE_BACKEND", "auto")
    choice = choice.strip().lower() or "auto"
    if choice == "auto":
        return BACKEND_COMPILED if compiled_available() else BACKEND_PYTHON
    if choice == BACKEND_COMPILED:
        if not compiled_available():
            raise ConfigError("compiled distance backend requested but the extension is not built")
        return BACKEND_COMPILED
    if choice in (BACKEND_PYTHON, "numpy"):
        return BACKEND_PYTHON
    raise ConfigError(f"unknown distance backend {choice!r}; use 'compiled', 'python', or 'auto'")


def cosine_distance(a, b) -> float:
    """1 - cos(a, b), clamped to [0, 2].

    Zero-vector rule: both norms below 1e-12 -> 0; exactly one -> 1.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < ZERO_NORM_EPS and nb < ZERO_NORM_EPS:
        return 0.0
    if na < ZERO_NORM_EPS or nb < ZERO_NORM_EPS:
        return 1.0
    d = 1.0 - float(np.dot(a, b)) / (na * nb)
    return min(max(d, 0.0), 2.0)


def cosine_distance_matrix(a, b) -> np.ndarray:
    """Pairwise cosine distances between the rows of two [*, D] arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        d = 1.0 - (a @ b.T) / np.outer(na, nb)
    a_zero = na < ZERO_NORM_EPS
    b_zero = nb < ZERO_NORM_EPS
    if a_zero.any() or b_zero.any():
        d[a_zero, :] = 1.0
        d[:, b_zero] = 1.0
        d[np.ix_(a_zero, b_zero)] = 0.0
    return np.clip(d, 0.0, 2.0)


def _update_python(pool: np.ndarray, norms: np.ndarray, min_dist: np.ndarray, new_index: int) -> None:
    nj = norms[new_index]
    if nj < ZERO_NORM_EPS:
        d = np.where(norms < ZERO_NORM_EPS, 0.0, 1.0)
    else:
        with np.errstate(invalid="ignore", divide="ignore"):
            d = 1.0 - (pool @ pool[new_index]) / (norms * nj)
        d[norms < ZERO_NORM_EPS] = 1.0
        np.clip(d, 0.0, 2.0, out=d)
    np.minimum(min_dist, d, out=min_dist)


class MinDistCache:
    """Running minimum cosine distance from every pool row to a selected set.

    ``min_dist`` holds +inf while the selected set is empty.  The pool is
    captured as a float64 C-contiguous copy with precomputed row norms; one
    cache serves exactly one selection run.
    """

    __slots__ = ("pool", "norms", "min_dist", "n_selected", "backend")

    def __init__(self, pool, selected=(), backend: str | None = None):
        p = np.ascontiguousarray(np.asarray(pool), dtype=np.float64)
        if p.ndim != 2:
            raise ValueError("pool must be a [N, D] array")
        self.pool = p
        self.norms = np.linalg.norm(p, axis=1)
        self.min_dist = np.full(p.shape[0], np.inf)
        self.n_selected = 0
        self.backend = resolve_backend(backend)
        for idx in selected:
            self.update(int(idx))

    def update(self, new_index: int) -> None:
        if not 0 <= new_index < self.pool.shape[0]:
            raise IndexError(f"index {new_index} out of range for pool of {self.pool.shape[0]}")
        if self.backend == BACKEND_COMPILED:
            _compiled.update_min_dist(self.pool, self.norms, self.min_dist, new_index)
        else:
            _update_python(self.pool, self.norms, self.min_dist, new_index)
        self.n_selected += 1


def seed_cache(pool, selected, backend: str | None = None) -> MinDistCache:
    """Cache seeded with a selected set; empty set leaves all entries +inf."""
    return MinDistCache(pool, selected, backend=backend)


def update_cache(cache: MinDistCache, pool, new_index: int) -> MinDistCache:
    """Fold one more selected sample into the running minimum."""
    pool = np.asarray(pool)
    if pool.shape != cache.pool.shape:
        raise ValueError(f"pool shape {pool.shape} does not match cache pool {cache.pool.shape}")
    cache.update(int(new_index))
    return cache


def argmax_min_dist(cache: MinDistCache, candidate_mask) -> int:
    """Candidate index with maximal min-distance; ties go to the lowest index."""
    mask = np.asarray(candidate_mask, dtype=bool)
    if mask.shape != (cache.pool.shape[0],):
        raise ValueError("candidate_mask must be a boolean array over the pool")
    if not mask.any():
        raise ValueError("empty candidate set")
    masked = np.where(mask, cache.min_dist, -np.inf)
    return int(np.argmax(masked))  # argmax returns the first (lowest) maximizer
