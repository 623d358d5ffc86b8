"""Selection policies over the annotation pool.

Four policies fill a fixed-size group from the unlabeled set each round:

* random      - uniform without replacement (the baseline).
* mismatch    - rank by committee disagreement (Hamming distance between the
                MLP's and the NN's max-pooled binary predictions); whole
                score buckets are taken, the overflowing bucket is sampled
                uniformly.
* farthest    - greedy farthest traversal in cosine distance over pooled
                embeddings (k-center greedy); random first pick on a cold
                pool, otherwise seeded with the labeled set.
* mismatch-first farthest-traversal - mismatch ranking whose overflowing
                score bucket is resolved by farthest traversal inside the
                bucket; falls back to pure farthest traversal while no
                labeled positive exists.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import MlpModel, max_pooled_scores, nn_predict_batch
from .distance import argmax_min_dist, seed_cache, update_cache


@dataclass
class PoolState:
    """Evolving partition of the active-learning train split.

    `labeled` keeps annotation order; `unlabeled` is the complement within
    the split; `rng` is the trial's dedicated selection stream.
    """

    labeled: list[int]
    unlabeled: set[int]
    iteration: int
    rng: np.random.Generator

    def sorted_unlabeled(self) -> np.ndarray:
        return np.fromiter(sorted(self.unlabeled), dtype=np.intp, count=len(self.unlabeled))


@dataclass
class SelectionRequest:
    """Inputs one selection round needs beyond the pool state.

    `nn_indices`/`nn_labels` carry the NN committee member's reference set
    (ascending sample indices and their revealed pooled labels); `dataset`
    supplies embeddings only.
    """

    group_size: int
    dataset: object
    model: MlpModel | None = None
    threshold: float | None = None
    nn_indices: np.ndarray | None = None
    nn_labels: np.ndarray | None = None


def select_random(state: PoolState, n: int) -> list[int]:
    """n distinct indices drawn uniformly from the unlabeled set."""
    if n > len(state.unlabeled):
        raise ValueError(f"cannot draw {n} from {len(state.unlabeled)} unlabeled samples")
    if n == 0:
        return []
    picks = state.rng.choice(state.sorted_unlabeled(), size=n, replace=False)
    return [int(i) for i in picks]


def mismatch_score(mlp_bin, nn_bin) -> int:
    """Count of class-wise disagreements between two binary vectors."""
    a = np.asarray(mlp_bin)
    b = np.asarray(nn_bin)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))


def committee_mismatch_scores(req: SelectionRequest, candidates: np.ndarray) -> np.ndarray:
    """Mismatch score of every candidate under the current committee."""
    if req.model is None or req.threshold is None:
        raise ValueError("selection request has no trained committee model")
    if req.nn_indices is None or len(req.nn_indices) == 0:
        raise ValueError("committee needs at least one labeled sample for the NN member")
    ds = req.dataset
    mlp_bin = max_pooled_scores(req.model, ds.embeddings[candidates]) >= req.threshold
    ref_idx = np.asarray(req.nn_indices, dtype=np.intp)
    nn_bin = nn_predict_batch(
        ds.pooled_embeddings[ref_idx], np.asarray(req.nn_labels), ds.pooled_embeddings[candidates]
    )
    return np.count_nonzero(mlp_bin != (nn_bin != 0), axis=1)


def _score_buckets(scores: np.ndarray, candidates: np.ndarray):
    """Candidate buckets grouped by score, highest score first, index-sorted."""
    for score in np.unique(scores)[::-1]:
        yield int(score), candidates[scores == score]


def _greedy_farthest(pooled, seed_indices, candidates, n: int, backend: str | None = None) -> list[int]:
    """n picks from `candidates`, each maximizing min cosine distance to the
    seed set plus the picks made so far; ties go to the lowest index."""
    if n == 0:
        return []
    cache = seed_cache(pooled, seed_indices, backend=backend)
    mask = np.zeros(cache.pool.shape[0], dtype=bool)
    mask[np.asarray(candidates, dtype=np.intp)] = True
    picks: list[int] = []
    for _ in range(n):
        idx = argmax_min_dist(cache, mask)
        picks.append(idx)
        mask[idx] = False
        update_cache(cache, pooled, idx)
    return picks


def select_mp(state: PoolState, req: SelectionRequest) -> list[int]:
    """Highest-mismatch selection; the overflowing score bucket is sampled
    uniformly without replacement from the trial's RNG stream."""
    n = req.group_size
    if n > len(state.unlabeled):
        raise ValueError(f"group size {n} exceeds {len(state.unlabeled)} unlabeled samples")
    if not state.labeled:
        raise ValueError("mismatch priority needs a non-empty labeled set")
    candidates = state.sorted_unlabeled()
    scores = committee_mismatch_scores(req, candidates)
    chosen: list[int] = []
    for _, members in _score_buckets(scores, candidates):
        remaining = n - len(chosen)
        if remaining == 0:
            break
        if len(members) <= remaining:
            chosen.extend(int(i) for i in members)
        else:
            drawn = state.rng.choice(members, size=remaining, replace=False)
            chosen.extend(int(i) for i in drawn)
            break
    return chosen


def select_ft(state: PoolState, req: SelectionRequest, seeded_with_labeled: bool) -> list[int]:
    """Greedy farthest traversal over the unlabeled pool.

    With `seeded_with_labeled` and a non-empty labeled set, the traversal
    starts from the labeled set and every pick is an argmax; otherwise the
    first pick is uniformly random and the traversal continues from it.
    """
    n = req.group_size
    if n > len(state.unlabeled):
        raise ValueError(f"group size {n} exceeds {len(state.unlabeled)} unlabeled samples")
    if n == 0:
        return []
    pooled = req.dataset.pooled_embeddings
    candidates = state.sorted_unlabeled()
    if seeded_with_labeled and state.labeled:
        return _greedy_farthest(pooled, state.labeled, candidates, n)
    first = int(state.rng.choice(candidates))
    rest = _greedy_farthest(pooled, [first], candidates[candidates != first], n - 1)
    return [first, *rest]


def select_mfft(state: PoolState, req: SelectionRequest, ft_seed_with_labeled: bool = True) -> list[int]:
    """Mismatch-first farthest-traversal.

    While no labeled sample has a positive pooled label the committee is
    unreliable, so the round degenerates to plain farthest traversal.
    Otherwise candidates are taken by descending mismatch-score buckets;
    the first bucket that overflows the remaining quota is resolved by
    farthest traversal inside the bucket, seeded with the labeled set plus
    everything already chosen this round.
    """
    n = req.group_size
    if n > len(state.unlabeled):
        raise ValueError(f"group size {n} exceeds {len(state.unlabeled)} unlabeled samples")
    if req.nn_labels is None or not np.asarray(req.nn_labels).any():
        return select_ft(state, req, seeded_with_labeled=ft_seed_with_labeled)
    pooled = req.dataset.pooled_embeddings
    candidates = state.sorted_unlabeled()
    scores = committee_mismatch_scores(req, candidates)
    chosen: list[int] = []
    for _, members in _score_buckets(scores, candidates):
        remaining = n - len(chosen)
        if remaining == 0:
            break
        if len(members) <= remaining:
            chosen.extend(int(i) for i in members)
        else:
            seed = [*state.labeled, *chosen]
            chosen.extend(_greedy_farthest(pooled, seed, members, remaining))
            break
    return chosen


def warm_start_init(ds, train_split, n_init: int, rng: np.random.Generator) -> list[int]:
    """Up to n_init positive samples per class, drawn without replacement.

    A sample already taken for an earlier class is excluded from later
    classes; classes short on positives contribute what they have.
    """
    if n_init < 0:
        raise ValueError("n_init must be >= 0")
    if n_init == 0:
        return []
    train_split = sorted(int(i) for i in train_split)
    chosen: list[int] = []
    taken: set[int] = set()
    n_classes = ds.pooled_labels.shape[1]
    for c in range(n_classes):
        positives = [i for i in train_split if ds.pooled_labels[i, c] and i not in taken]
        if not positives:
            continue
        take = min(n_init, len(positives))
        picks = rng.choice(np.asarray(positives, dtype=np.intp), size=take, replace=False)
        for i in picks:
            chosen.append(int(i))
            taken.add(int(i))
    return chosen
