"""Deterministic derivation of independent RNG streams.

Every random choice in an experiment (split shuffling, warm-start draws,
selection noise, weight init, batch shuffling) gets its own stream derived
from ``(base_seed, trial_index, purpose, ...)`` so that reruns are
bit-reproducible and trials never share randomness by accident.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def derive_seed(base_seed: int, *parts: int | str) -> int:
    """Mix a base seed with context parts into a new 64-bit seed.

    String parts are hashed with FNV-1a (stable across platforms and runs,
    unlike the builtin ``hash``); integer parts are used as-is.  Each part
    is folded through a splitmix64 round, so unrelated contexts land in
    unrelated streams.
    """
    state = _splitmix64(int(base_seed) & _MASK64)
    for part in parts:
        code = _fnv1a64(part.encode("utf-8")) if isinstance(part, str) else int(part) & _MASK64
        state = _splitmix64(state ^ code)
    return state


def spawn_rng(base_seed: int, *parts: int | str) -> np.random.Generator:
    """A fresh numpy Generator seeded from the derived stream."""
    return np.random.default_rng(derive_seed(base_seed, *parts))
