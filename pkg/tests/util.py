"""Shared helpers: tiny dataset builders and independent brute-force oracles.

The oracles here intentionally avoid the library's fast paths (caches,
vectorized kernels) so tests compare two independent routes to the same
answer.
"""

from __future__ import annotations

import numpy as np

from bioal.dataset import FORMAT_VERSION, DatasetManifest, build_dataset
from bioal.distance import cosine_distance


def make_dataset(embeddings, labels, rare_class_indices=()):
    """EmbeddingDataset from raw [N, T, D] embeddings and [N, T, C] labels."""
    embeddings = np.asarray(embeddings, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.uint8)
    n, t, d = embeddings.shape
    c = labels.shape[2]
    manifest = DatasetManifest(
        format_version=FORMAT_VERSION,
        n_samples=n,
        n_segments=t,
        embedding_dim=d,
        n_classes=c,
        class_names=tuple(f"species_{i:02d}" for i in range(c)),
        rare_class_indices=tuple(rare_class_indices),
        embeddings_path="embeddings.f32",
        labels_path="labels.u8",
    )
    return build_dataset(manifest, embeddings, labels)


def make_pool_dataset(pooled_vectors, pooled_labels, rare_class_indices=()):
    """Single-segment dataset whose pooled arrays equal the given arrays."""
    vectors = np.asarray(pooled_vectors, dtype=np.float32)[:, None, :]
    labels = np.asarray(pooled_labels, dtype=np.uint8)[:, None, :]
    return make_dataset(vectors, labels, rare_class_indices)


def brute_min_dist(pool, selected) -> np.ndarray:
    """Minimum cosine distance of every pool row to a selected set, pairwise."""
    pool = np.asarray(pool, dtype=np.float64)
    out = np.full(pool.shape[0], np.inf)
    for i in range(pool.shape[0]):
        for s in selected:
            out[i] = min(out[i], cosine_distance(pool[i], pool[int(s)]))
    return out


def brute_farthest_traversal(pool, seed_indices, candidates, n) -> list[int]:
    """Greedy farthest traversal recomputing every distance from scratch."""
    selected = [int(i) for i in seed_indices]
    remaining = [int(i) for i in candidates]
    picks = []
    for _ in range(n):
        best_idx, best_val = None, -np.inf
        for i in remaining:
            val = min(cosine_distance(pool[i], pool[s]) for s in selected) if selected else np.inf
            if val > best_val:
                best_idx, best_val = i, val
        picks.append(best_idx)
        selected.append(best_idx)
        remaining.remove(best_idx)
    return picks


def ap_reference(scores, targets) -> float:
    """Average precision computed rank by rank, no vectorization.

    Ranks by descending score with original order on ties, then averages
    the precision observed at each positive's rank.
    """
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    total_pos = sum(1 for t in targets if t)
    if total_pos == 0:
        raise ValueError("no positives")
    hits = 0
    precisions = []
    for rank, i in enumerate(order, start=1):
        if targets[i]:
            hits += 1
            precisions.append(hits / rank)
    return sum(precisions) / total_pos


def macro_f1_reference(pred_bin, truth) -> float:
    """Macro F1 by explicit per-class counting; skips positive-free classes."""
    pred_bin = np.asarray(pred_bin) != 0
    truth = np.asarray(truth) != 0
    scores = []
    for c in range(truth.shape[1]):
        if not truth[:, c].any():
            continue
        tp = int(np.sum(pred_bin[:, c] & truth[:, c]))
        fp = int(np.sum(pred_bin[:, c] & ~truth[:, c]))
        fn = int(np.sum(~pred_bin[:, c] & truth[:, c]))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return sum(scores) / len(scores)
