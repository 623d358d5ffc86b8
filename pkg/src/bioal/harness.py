"""Experiment engine: simulated annotation under a labeling budget.

Each trial splits the pool, then loops select -> reveal -> retrain ->
evaluate until the budget is spent, recording segment-level mAP, F1 at the
validation-selected threshold, and the cumulative rare-class sample count.
Ground-truth labels of the train pool stay behind a guard that records any
read of an unrevealed sample, so the simulation provably never cheats.

Trials are self-contained (all randomness derives from base_seed and the
trial index), which makes serial and parallel execution byte-identical.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import evaluation
from .classifier import (
    MlpConfig,
    ThresholdPolicy,
    TrainConfig,
    predict_segment_scores,
    select_threshold,
    train_mlp,
)
from .dataset import EmbeddingDataset, SplitSpec, load_dataset, split_dataset
from .errors import ConfigError
from .evaluation import AggregatePoint, MetricPoint
from .seeding import derive_seed, spawn_rng
from .strategies import (
    PoolState,
    SelectionRequest,
    committee_mismatch_scores,
    select_ft,
    select_mfft,
    select_mp,
    select_random,
    warm_start_init,
)

METHODS = ("RS", "MP", "FT", "MFFT", "FULL")
STARTS = ("cold", "warm")

RESULTS_HEADER = ("method", "start", "trial", "seed", "n_annotated", "map", "f1", "rare_count")
AGGREGATE_HEADER = (
    "method",
    "start",
    "n_annotated",
    "map_mean",
    "map_std",
    "f1_mean",
    "f1_std",
    "rare_mean",
    "rare_std",
)


@dataclass(frozen=True)
class ExperimentConfig:
    method: str
    manifest_path: str = ""
    start: str = "cold"
    budget: int = 500
    group_size: int = 50
    n_init: int = 5
    n_trials: int = 5
    base_seed: int = 0
    split: SplitSpec = SplitSpec()
    train: TrainConfig = TrainConfig()
    hidden_dims: tuple[int, ...] = (256,)
    threshold: ThresholdPolicy = ThresholdPolicy()
    ft_seed_with_labeled: bool = True
    n_jobs: int = 1

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose one of {', '.join(METHODS)}")
        if self.start not in STARTS:
            raise ConfigError(f"unknown start {self.start!r}; choose one of {', '.join(STARTS)}")
        if self.group_size < 1 or self.budget < 1:
            raise ConfigError("budget and group_size must be >= 1")
        if self.budget % self.group_size != 0:
            raise ConfigError(
                f"budget {self.budget} must be divisible by group_size {self.group_size}"
            )
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if self.n_jobs < 1:
            raise ConfigError("n_jobs must be >= 1")
        if self.start == "warm" and self.n_init < 0:
            raise ConfigError("n_init must be >= 0")
        self.split.validate()
        self.train.validate()


class LabelGuard:
    """Ledger of learner-side ground-truth reads over the train pool.

    Pool samples must be revealed before their labels may be read; samples
    outside the pool (validation/test splits) are always readable.  Reads
    of unrevealed pool samples are recorded, not raised, so a finished run
    can report its violation count.
    """

    def __init__(self, n_samples: int, pool_indices):
        self._in_pool = np.zeros(n_samples, dtype=bool)
        self._in_pool[np.asarray(pool_indices, dtype=np.intp)] = True
        self._revealed = np.zeros(n_samples, dtype=bool)
        self.violation_count = 0
        self.first_violations: list[int] = []

    def reveal(self, indices) -> None:
        idx = np.asarray(list(indices), dtype=np.intp)
        if idx.size:
            self._revealed[idx] = True

    def record_read(self, rows) -> None:
        rows = np.asarray(rows, dtype=np.intp)
        if rows.size == 0:
            return
        bad = rows[self._in_pool[rows] & ~self._revealed[rows]]
        if bad.size:
            self.violation_count += int(bad.size)
            for r in bad[: max(0, 8 - len(self.first_violations))]:
                self.first_violations.append(int(r))


def _rows_of_key(key, n_rows: int):
    if isinstance(key, tuple):
        key = key[0] if key else slice(None)
    if key is Ellipsis or key is None:
        return np.arange(n_rows)
    if isinstance(key, (int, np.integer)):
        return np.asarray([int(key)])
    if isinstance(key, slice):
        return np.arange(*key.indices(n_rows))
    arr = np.asarray(key)
    if arr.dtype == bool:
        return np.nonzero(arr)[0]
    if arr.dtype.kind in "iu":
        return arr.ravel()
    return np.arange(n_rows)  # unrecognized indexer: count everything


class _GuardedLabels(np.ndarray):
    """Label array view that reports row reads to a LabelGuard."""

    def __getitem__(self, key):
        guard = getattr(self, "_guard", None)
        if guard is not None:
            guard.record_read(_rows_of_key(key, self.shape[0]))
        out = super().__getitem__(key)
        return out.view(np.ndarray) if isinstance(out, np.ndarray) else out


class GuardedDataset:
    """Dataset proxy whose label arrays are routed through a LabelGuard."""

    def __init__(self, ds: EmbeddingDataset, guard: LabelGuard):
        self._ds = ds
        self.guard = guard
        labels = ds.labels.view(_GuardedLabels)
        labels._guard = guard
        pooled = ds.pooled_labels.view(_GuardedLabels)
        pooled._guard = guard
        self.labels = labels
        self.pooled_labels = pooled

    @property
    def manifest(self):
        return self._ds.manifest

    @property
    def embeddings(self):
        return self._ds.embeddings

    @property
    def pooled_embeddings(self):
        return self._ds.pooled_embeddings

    @property
    def n_samples(self):
        return self._ds.n_samples

    @property
    def n_segments(self):
        return self._ds.n_segments

    @property
    def embedding_dim(self):
        return self._ds.embedding_dim

    @property
    def n_classes(self):
        return self._ds.n_classes


@dataclass
class TrialResult:
    trial_index: int
    seed: int
    points: list[MetricPoint]
    selection_log: list[tuple[int, int]]  # (iteration, sample index), annotation order
    warm_count: int = 0
    guard_violations: int = 0
    log_lines: list[str] = field(default_factory=list)


@dataclass
class RunReport:
    config: ExperimentConfig
    trials: list[TrialResult]
    aggregate: list[AggregatePoint]
    full_points: list[MetricPoint] = field(default_factory=list)
    full_aggregate: AggregatePoint | None = None


def reveal_labels(ds, state: PoolState, chosen, guard: LabelGuard | None = None) -> PoolState:
    """Move chosen samples from unlabeled to labeled, in the given order.

    Their ground-truth labels become readable afterwards.  Revealing a
    sample that is not currently unlabeled is an error.
    """
    chosen = [int(i) for i in chosen]
    for i in chosen:
        if i not in state.unlabeled:
            raise ValueError(f"sample {i} is already labeled or outside the pool")
        state.unlabeled.discard(i)
        state.labeled.append(i)
    if guard is not None:
        guard.reveal(chosen)
    return state


def _evaluate(model, threshold, ds, test_idx, labeled, rare_classes) -> MetricPoint:
    test_idx = np.asarray(test_idx, dtype=np.intp)
    c = ds.labels.shape[2]
    scores = predict_segment_scores(model, ds.embeddings[test_idx]).reshape(-1, c)
    truth = ds.labels[test_idx].reshape(-1, c)
    test_map, per_class = evaluation.mean_average_precision(scores, truth)
    f1 = evaluation.f1_macro(scores >= threshold, truth)
    rare = evaluation.rare_species_count(ds, labeled, rare_classes)
    return MetricPoint(
        n_annotated=len(labeled),
        map=test_map,
        f1=f1,
        rare_count=rare,
        per_class_ap=tuple(float(a) for a in per_class),
    )


def _bucket_summary(scores: np.ndarray) -> str:
    values, counts = np.unique(scores, return_counts=True)
    pairs = ", ".join(f"{int(v)}:{int(k)}" for v, k in zip(values[::-1], counts[::-1]))
    return f"score buckets (score:count) {pairs}"


def run_trial(cfg: ExperimentConfig, trial_index: int, ds: EmbeddingDataset | None = None) -> TrialResult:
    """One seeded trial of the iterate-select-reveal-train-evaluate loop."""
    cfg.validate()
    if cfg.method == "FULL":
        raise ConfigError("run_trial runs AL methods; use run_full_supervised for FULL")
    if ds is None:
        ds = load_dataset(cfg.manifest_path)

    base = cfg.base_seed
    split_spec = SplitSpec(
        train_fraction=cfg.split.train_fraction,
        val_fraction=cfg.split.val_fraction,
        test_fraction=cfg.split.test_fraction,
        seed=derive_seed(base, trial_index, "split"),
    )
    train_idx, val_idx, test_idx = split_dataset(ds, split_spec)
    if cfg.budget > len(train_idx):
        raise ConfigError(f"budget {cfg.budget} exceeds the train split size {len(train_idx)}")
    n_classes = ds.n_classes
    if cfg.start == "warm" and cfg.n_init * n_classes > cfg.group_size:
        raise ConfigError(
            f"warm start needs n_init * n_classes <= group_size "
            f"({cfg.n_init} * {n_classes} > {cfg.group_size})"
        )

    guard = LabelGuard(ds.n_samples, train_idx)
    gds = GuardedDataset(ds, guard)
    state = PoolState(
        labeled=[],
        unlabeled=set(int(i) for i in train_idx),
        iteration=0,
        rng=spawn_rng(base, trial_index, "selection"),
    )
    val_list = [int(i) for i in val_idx]
    rare_classes = ds.manifest.rare_class_indices
    log: list[str] = []
    selection_log: list[tuple[int, int]] = []

    warm_indices: list[int] = []
    if cfg.start == "warm":
        # Oracle-side seeding: the simulated annotator donates labeled
        # positives, so it reads the raw dataset, not the guarded view.
        warm_indices = warm_start_init(ds, train_idx, cfg.n_init, spawn_rng(base, trial_index, "warm"))
        expected = cfg.n_init * n_classes
        if len(warm_indices) < expected:
            log.append(
                f"warm start shortfall: {len(warm_indices)} of {expected} seed samples available"
            )
        reveal_labels(gds, state, warm_indices, guard)
        selection_log.extend((0, i) for i in warm_indices)
        log.append(f"warm start revealed {len(warm_indices)} samples: {warm_indices}")

    def _retrain(retrain_tag: int):
        tcfg = dataclasses.replace(cfg.train, train_seed=derive_seed(base, trial_index, "shuffle", retrain_tag))
        mcfg = MlpConfig(
            input_dim=ds.embedding_dim,
            n_classes=n_classes,
            hidden_dims=cfg.hidden_dims,
            init_seed=derive_seed(base, trial_index, "init", retrain_tag),
        )
        model = train_mlp(gds, state.labeled, val_list, tcfg, mcfg)
        thr = select_threshold(model, gds, val_list, cfg.threshold)
        return model, thr

    model = None
    threshold = None
    points: list[MetricPoint] = []
    n_iterations = cfg.budget // cfg.group_size

    for k in range(1, n_iterations + 1):
        state.iteration = k
        n_request = cfg.group_size - (len(warm_indices) if k == 1 else 0)

        lab_arr = np.asarray(state.labeled, dtype=np.intp)
        has_positive = bool(gds.pooled_labels[lab_arr].any()) if state.labeled else False

        if cfg.method in ("MP", "MFFT") and has_positive and model is None:
            model, threshold = _retrain(0)  # bootstrap committee from warm seeds
            log.append(f"iteration {k}: bootstrap committee trained on {len(state.labeled)} warm samples")

        nn_indices = np.asarray(sorted(state.labeled), dtype=np.intp)
        req = SelectionRequest(
            group_size=n_request,
            dataset=gds,
            model=model,
            threshold=threshold,
            nn_indices=nn_indices,
            nn_labels=gds.pooled_labels[nn_indices] if nn_indices.size else None,
        )

        if cfg.method == "RS":
            chosen = select_random(state, n_request)
        elif cfg.method == "FT":
            chosen = select_ft(state, req, seeded_with_labeled=cfg.ft_seed_with_labeled)
        elif cfg.method == "MP":
            if has_positive:
                log.append(f"iteration {k}: {_bucket_summary(committee_mismatch_scores(req, state.sorted_unlabeled()))}")
                chosen = select_mp(state, req)
            else:
                # No labeled positive yet: every sample sits in one tie
                # bucket, and the bucket rule is a uniform draw.
                chosen = select_random(state, n_request)
                log.append(f"iteration {k}: cold committee, uniform draw over the whole pool")
        elif cfg.method == "MFFT":
            if has_positive:
                log.append(f"iteration {k}: {_bucket_summary(committee_mismatch_scores(req, state.sorted_unlabeled()))}")
                chosen = select_mfft(state, req, ft_seed_with_labeled=cfg.ft_seed_with_labeled)
            else:
                chosen = select_ft(state, req, seeded_with_labeled=cfg.ft_seed_with_labeled)
                log.append(f"iteration {k}: cold committee, falling back to farthest traversal")
        else:  # pragma: no cover - validate() rejects other methods
            raise ConfigError(f"unknown method {cfg.method!r}")

        reveal_labels(gds, state, chosen, guard)
        selection_log.extend((k, i) for i in chosen)
        log.append(f"iteration {k}: selected {len(chosen)} samples: {chosen}")
        assert len(state.labeled) == k * cfg.group_size

        model, threshold = _retrain(k)
        points.append(_evaluate(model, threshold, gds, test_idx, state.labeled, rare_classes))

    return TrialResult(
        trial_index=trial_index,
        seed=derive_seed(base, trial_index),
        points=points,
        selection_log=selection_log,
        warm_count=len(warm_indices),
        guard_violations=guard.violation_count,
        log_lines=log,
    )


def run_full_supervised(cfg: ExperimentConfig, trial_index: int = 0, ds: EmbeddingDataset | None = None) -> MetricPoint:
    """Upper-reference model trained on the whole train split (all labels)."""
    cfg.validate()
    if ds is None:
        ds = load_dataset(cfg.manifest_path)
    base = cfg.base_seed
    split_spec = SplitSpec(
        train_fraction=cfg.split.train_fraction,
        val_fraction=cfg.split.val_fraction,
        test_fraction=cfg.split.test_fraction,
        seed=derive_seed(base, trial_index, "split"),
    )
    train_idx, val_idx, test_idx = split_dataset(ds, split_spec)
    tcfg = dataclasses.replace(cfg.train, train_seed=derive_seed(base, trial_index, "full-shuffle"))
    mcfg = MlpConfig(
        input_dim=ds.embedding_dim,
        n_classes=ds.n_classes,
        hidden_dims=cfg.hidden_dims,
        init_seed=derive_seed(base, trial_index, "full-init"),
    )
    train_list = [int(i) for i in train_idx]
    model = train_mlp(ds, train_list, [int(i) for i in val_idx], tcfg, mcfg)
    threshold = select_threshold(model, ds, [int(i) for i in val_idx], cfg.threshold)
    return _evaluate(model, threshold, ds, test_idx, train_list, ds.manifest.rare_class_indices)


def _trial_job(cfg: ExperimentConfig, trial_index: int, with_full: bool):
    ds = load_dataset(cfg.manifest_path)
    trial = run_trial(cfg, trial_index, ds=ds) if cfg.method != "FULL" else None
    full = run_full_supervised(cfg, trial_index, ds=ds) if (with_full or cfg.method == "FULL") else None
    return trial, full


def run_experiment(cfg: ExperimentConfig, with_full: bool = False) -> RunReport:
    """n_trials independent trials, aggregated to mean +/- sample std.

    Trials may run in parallel (cfg.n_jobs > 1); outputs are collected in
    trial order and each trial derives all of its randomness from
    (base_seed, trial_index), so parallel and serial runs are identical.
    """
    cfg.validate()
    want_full = with_full or cfg.method == "FULL"

    if cfg.n_jobs > 1:
        if not cfg.manifest_path:
            raise ConfigError("parallel trials need a dataset manifest path")
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.n_jobs) as pool:
            futures = [pool.submit(_trial_job, cfg, i, want_full) for i in range(cfg.n_trials)]
            outcomes = [f.result() for f in futures]
    else:
        ds = load_dataset(cfg.manifest_path) if cfg.manifest_path else None
        outcomes = []
        for i in range(cfg.n_trials):
            trial = run_trial(cfg, i, ds=ds) if cfg.method != "FULL" else None
            full = run_full_supervised(cfg, i, ds=ds) if want_full else None
            outcomes.append((trial, full))

    trials = [t for t, _ in outcomes if t is not None]
    full_points = [f for _, f in outcomes if f is not None]
    aggregate = evaluation.aggregate_trials([t.points for t in trials]) if trials else []
    full_aggregate = None
    if full_points:
        full_aggregate = evaluation.aggregate_trials([[p] for p in full_points])[0]
    return RunReport(
        config=cfg,
        trials=trials,
        aggregate=aggregate,
        full_points=full_points,
        full_aggregate=full_aggregate,
    )


def config_as_dict(cfg: ExperimentConfig) -> dict:
    """Resolved config (defaults applied) as a JSON-serializable dict."""
    raw = dataclasses.asdict(cfg)
    raw["hidden_dims"] = list(cfg.hidden_dims)
    return raw


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def results_csv_text(report: RunReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULTS_HEADER)
    cfg = report.config
    for trial in report.trials:
        for p in trial.points:
            writer.writerow(
                [cfg.method, cfg.start, trial.trial_index, trial.seed, p.n_annotated,
                 _fmt(p.map), _fmt(p.f1), p.rare_count]
            )
    for i, p in enumerate(report.full_points):
        writer.writerow(
            ["FULL", cfg.start, i, derive_seed(cfg.base_seed, i), p.n_annotated,
             _fmt(p.map), _fmt(p.f1), p.rare_count]
        )
    return buf.getvalue()


def aggregate_csv_text(report: RunReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(AGGREGATE_HEADER)
    cfg = report.config
    for a in report.aggregate:
        writer.writerow(
            [cfg.method, cfg.start, a.n_annotated, _fmt(a.map_mean), _fmt(a.map_std),
             _fmt(a.f1_mean), _fmt(a.f1_std), _fmt(a.rare_mean), _fmt(a.rare_std)]
        )
    if report.full_aggregate is not None:
        a = report.full_aggregate
        writer.writerow(
            ["FULL", cfg.start, a.n_annotated, _fmt(a.map_mean), _fmt(a.map_std),
             _fmt(a.f1_mean), _fmt(a.f1_std), _fmt(a.rare_mean), _fmt(a.rare_std)]
        )
    return buf.getvalue()


def run_log_text(report: RunReport, started_at: float | None = None, elapsed: float | None = None) -> str:
    lines = []
    if started_at is not None:
        lines.append(f"started: {time.strftime('%Y-%m-%d %H:%M:%S', time.localtime(started_at))}")
    lines.append("resolved config:")
    lines.append(json.dumps(config_as_dict(report.config), indent=2, sort_keys=True))
    for trial in report.trials:
        lines.append(f"--- trial {trial.trial_index} (seed {trial.seed}) ---")
        lines.extend(trial.log_lines)
        lines.append(f"guard violations: {trial.guard_violations}")
    for i, p in enumerate(report.full_points):
        lines.append(f"--- full supervision, trial {i}: map {_fmt(p.map)} f1 {_fmt(p.f1)} ---")
    if elapsed is not None:
        lines.append(f"elapsed_seconds: {elapsed:.3f}")
    return "\n".join(lines) + "\n"


def write_report(report: RunReport, out_dir, started_at: float | None = None, elapsed: float | None = None) -> dict[str, Path]:
    """Write results.csv, aggregate.csv, and run.log; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "results": out / "results.csv",
        "aggregate": out / "aggregate.csv",
        "log": out / "run.log",
    }
    paths["results"].write_text(results_csv_text(report), encoding="utf-8")
    paths["aggregate"].write_text(aggregate_csv_text(report), encoding="utf-8")
    paths["log"].write_text(run_log_text(report, started_at, elapsed), encoding="utf-8")
    return paths
