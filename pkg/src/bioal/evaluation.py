"""Segment-level ranking metrics and across-trial aggregation.

All metrics operate on flattened segment axes: predictions and ground truth
are ``[M, C]`` where M is the total number of segments across the evaluated
samples and C the number of classes.  Classes without a single positive
segment in the ground truth are skipped by the macro averages (their AP/F1
would be undefined).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MetricPoint:
    """Metrics recorded after one annotation round."""

    n_annotated: int
    map: float
    f1: float
    rare_count: int
    per_class_ap: tuple[float, ...]  # NaN for classes skipped in the truth


@dataclass(frozen=True)
class AggregatePoint:
    """Mean and sample std of one grid point across trials."""

    n_annotated: int
    map_mean: float
    map_std: float
    f1_mean: float
    f1_std: float
    rare_mean: float
    rare_std: float


def average_precision(scores, targets) -> float:
    """Step-wise average precision of one ranked list.

    Items are ranked by descending score; equal scores keep their original
    order (stable sort), so results are identical across platforms.  AP is
    the mean of the precision values at every positive's rank.

    Raises ValueError when the targets contain no positive: AP is undefined
    there and the caller decides whether to skip the class.
    """
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets)
    if scores.shape != targets.shape or scores.ndim != 1:
        raise ValueError("scores and targets must be equal-length 1-D arrays")
    n_pos = int(np.count_nonzero(targets))
    if n_pos == 0:
        raise ValueError("average precision undefined: no positive targets")
    order = np.argsort(-scores, kind="stable")
    hits = targets[order] != 0
    cum_tp = np.cumsum(hits)
    precision = cum_tp / np.arange(1, scores.size + 1)
    return float(np.sum(precision[hits]) / n_pos)


def mean_average_precision(pred, truth) -> tuple[float, np.ndarray]:
    """Macro mAP over classes; returns (map, per-class AP with NaN for skips).

    Classes with zero positive segments in `truth` are skipped.  Raises
    ValueError when every class is skipped.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 2:
        raise ValueError("pred and truth must be equal-shape [M, C] arrays")
    n_classes = pred.shape[1]
    per_class = np.full(n_classes, np.nan)
    for c in range(n_classes):
        if np.count_nonzero(truth[:, c]) > 0:
            per_class[c] = average_precision(pred[:, c], truth[:, c])
    evaluable = ~np.isnan(per_class)
    if not evaluable.any():
        raise ValueError("no evaluable classes")
    return float(per_class[evaluable].mean()), per_class


def f1_macro(pred_bin, truth) -> float:
    """Macro F1 over classes with at least one positive in the truth.

    Per class F1 = 2TP / (2TP + FP + FN), with 0/0 defined as 0.
    """
    pred_bin = np.asarray(pred_bin) != 0
    truth = np.asarray(truth) != 0
    if pred_bin.shape != truth.shape or pred_bin.ndim != 2:
        raise ValueError("pred_bin and truth must be equal-shape [M, C] arrays")
    evaluable = truth.any(axis=0)
    if not evaluable.any():
        raise ValueError("no evaluable classes")
    tp = np.count_nonzero(pred_bin & truth, axis=0).astype(np.float64)
    fp = np.count_nonzero(pred_bin & ~truth, axis=0).astype(np.float64)
    fn = np.count_nonzero(~pred_bin & truth, axis=0).astype(np.float64)
    denom = 2.0 * tp + fp + fn
    f1 = np.where(denom > 0, 2.0 * tp / np.where(denom > 0, denom, 1.0), 0.0)
    return float(f1[evaluable].mean())


def rare_species_count(ds, labeled, rare_classes) -> int:
    """Number of annotated samples positive for at least one rare class.

    Each sample counts once even when it carries several rare classes.
    """
    rare = sorted(set(int(c) for c in rare_classes))
    if not rare or len(labeled) == 0:
        return 0
    idx = np.asarray(list(labeled), dtype=np.intp)
    pooled = ds.pooled_labels[idx][:, rare]
    return int(np.count_nonzero(pooled.any(axis=1)))


def aggregate_trials(series: list[list[MetricPoint]]) -> list[AggregatePoint]:
    """Element-wise mean and sample std (ddof=1; 0 for a single trial).

    All trials must share the same n_annotated grid.
    """
    if not series:
        raise ValueError("no trials to aggregate")
    grid = [p.n_annotated for p in series[0]]
    for k, trial in enumerate(series):
        if [p.n_annotated for p in trial] != grid:
            raise ValueError(f"trial {k} has a mismatched n_annotated grid")

    def _stats(values: np.ndarray) -> tuple[float, float]:
        mean = float(values.mean())
        std = float(values.std(ddof=1)) if values.size > 1 else 0.0
        return mean, std

    out = []
    for j, n_annotated in enumerate(grid):
        maps = np.array([trial[j].map for trial in series])
        f1s = np.array([trial[j].f1 for trial in series])
        rares = np.array([trial[j].rare_count for trial in series], dtype=np.float64)
        map_mean, map_std = _stats(maps)
        f1_mean, f1_std = _stats(f1s)
        rare_mean, rare_std = _stats(rares)
        out.append(
            AggregatePoint(
                n_annotated=n_annotated,
                map_mean=map_mean,
                map_std=map_std,
                f1_mean=f1_mean,
                f1_std=f1_std,
                rare_mean=rare_mean,
                rare_std=rare_std,
            )
        )
    return out
