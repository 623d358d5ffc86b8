"""Command-line front end.

Subcommands: ``synth`` (generate a synthetic dataset), ``validate`` (check a
dataset against the file format), ``run`` (execute an experiment from a YAML
config), ``report`` (merge/aggregate results CSVs into a plot-ready table).

Exit codes: 0 success, 1 usage/config error, 2 data validation error,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import evaluation, harness
from .classifier import ThresholdPolicy, TrainConfig
from .dataset import (
    SplitSpec,
    SyntheticConfig,
    generate_synthetic,
    load_dataset,
    write_dataset,
)
from .errors import ConfigError, DataValidationError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); keep our code scheme
        raise ConfigError(message)


def _check_keys(block: dict, allowed, where: str) -> None:
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")


def _build(cls, block: dict, where: str, **overrides):
    fields = {f.name for f in dataclasses.fields(cls)}
    _check_keys(block, fields, where)
    kwargs = dict(block)
    kwargs.update(overrides)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad {where} block: {exc}") from exc


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping")
    _check_keys(raw, ("experiment", "synthetic"), str(path))
    return raw


def experiment_config_from_file(path, seed=None, trials=None, jobs=None) -> harness.ExperimentConfig:
    """Build an ExperimentConfig from a YAML file, applying CLI overrides.

    Manifest paths resolve relative to the config file's directory.
    """
    raw = load_config_file(path)
    if "experiment" not in raw:
        raise ConfigError(f"config {path} has no 'experiment' block")
    block = dict(raw["experiment"])
    nested = {}
    for key, cls in (("split", SplitSpec), ("train", TrainConfig), ("threshold", ThresholdPolicy)):
        if key in block:
            sub = block.pop(key)
            if not isinstance(sub, dict):
                raise ConfigError(f"'{key}' must be a mapping")
            nested[key] = _build(cls, sub, f"experiment.{key}")
    if "manifest" in block:
        manifest = block.pop("manifest")
        block["manifest_path"] = str((Path(path).parent / manifest).resolve())
    if "hidden_dims" in block:
        block["hidden_dims"] = tuple(int(d) for d in block["hidden_dims"])
    cfg = _build(harness.ExperimentConfig, block, "experiment", **nested)
    if seed is not None:
        cfg = dataclasses.replace(cfg, base_seed=seed)
    if trials is not None:
        cfg = dataclasses.replace(cfg, n_trials=trials)
    if jobs is not None:
        cfg = dataclasses.replace(cfg, n_jobs=jobs)
    cfg.validate()
    return cfg


def synthetic_config_from_file(path, seed=None) -> SyntheticConfig:
    raw = load_config_file(path)
    if "synthetic" not in raw:
        raise ConfigError(f"config {path} has no 'synthetic' block")
    block = dict(raw["synthetic"])
    for key in ("class_counts", "rare_class_indices"):
        if key in block:
            block[key] = tuple(block[key])
    if "class_names" in block:
        block["class_names"] = tuple(str(s) for s in block["class_names"])
    cfg = _build(SyntheticConfig, block, "synthetic")
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    try:
        cfg.validate()
    except DataValidationError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def cmd_synth(args) -> int:
    cfg = synthetic_config_from_file(args.config, seed=args.seed)
    ds = generate_synthetic(cfg)
    manifest_path = write_dataset(ds, args.out)
    counts = ds.pooled_labels.sum(axis=0)
    negatives = int(np.count_nonzero(~ds.pooled_labels.any(axis=1)))
    print(f"wrote {manifest_path}")
    print(f"samples: {ds.n_samples}  negatives: {negatives} ({negatives / ds.n_samples:.1%})")
    for name, count in zip(ds.manifest.class_names, counts):
        print(f"  {name}: {int(count)} positive samples")
    return EXIT_OK


def cmd_validate(args) -> int:
    ds = load_dataset(args.manifest)
    print(
        f"ok: {ds.n_samples} samples x {ds.n_segments} segments, "
        f"dim {ds.embedding_dim}, {ds.n_classes} classes"
    )
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = experiment_config_from_file(args.config, seed=args.seed, trials=args.trials, jobs=args.jobs)
    started = time.time()
    report = harness.run_experiment(cfg, with_full=args.with_full)
    elapsed = time.time() - started
    paths = harness.write_report(report, args.out, started_at=started, elapsed=elapsed)
    for name in ("results", "aggregate", "log"):
        print(f"wrote {paths[name]}")
    return EXIT_OK


def _read_results_csv(path) -> list[dict]:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or tuple(reader.fieldnames) != harness.RESULTS_HEADER:
                raise DataValidationError(
                    f"{path}: unexpected results schema {reader.fieldnames}"
                )
            return [dict(row, _source=str(path)) for row in reader]
    except OSError as exc:
        raise DataValidationError(f"cannot read {path}: {exc}") from exc


def cmd_report(args) -> int:
    rows = []
    for path in args.results:
        rows.extend(_read_results_csv(path))

    by_group: dict[tuple[str, str], dict[int, list]] = {}
    for row in rows:
        group = by_group.setdefault((row["method"], row["start"]), {})
        group.setdefault(int(row["trial"]), []).append(row)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    aggregate_rows = []
    long_rows = []
    grid_reference: list[int] | None = None
    for (method, start), trials in sorted(by_group.items()):
        series = []
        for trial_index in sorted(trials):
            trial_rows = sorted(trials[trial_index], key=lambda r: int(r["n_annotated"]))
            series.append(
                [
                    evaluation.MetricPoint(
                        n_annotated=int(r["n_annotated"]),
                        map=float(r["map"]),
                        f1=float(r["f1"]),
                        rare_count=int(r["rare_count"]),
                        per_class_ap=(),
                    )
                    for r in trial_rows
                ]
            )
        grid = [p.n_annotated for p in series[0]]
        if method != "FULL":
            if grid_reference is None:
                grid_reference = grid
            elif grid != grid_reference:
                source = trials[sorted(trials)[0]][0]["_source"]
                raise DataValidationError(
                    f"{source}: n_annotated grid {grid} does not match {grid_reference}"
                )
        try:
            aggregated = evaluation.aggregate_trials(series)
        except ValueError as exc:
            source = trials[sorted(trials)[0]][0]["_source"]
            raise DataValidationError(f"{source}: {exc}") from exc
        for a in aggregated:
            aggregate_rows.append(
                [method, start, a.n_annotated,
                 f"{a.map_mean:.6f}", f"{a.map_std:.6f}", f"{a.f1_mean:.6f}",
                 f"{a.f1_std:.6f}", f"{a.rare_mean:.6f}", f"{a.rare_std:.6f}"]
            )
            for metric, mean, std in (
                ("map", a.map_mean, a.map_std),
                ("f1", a.f1_mean, a.f1_std),
                ("rare_count", a.rare_mean, a.rare_std),
            ):
                long_rows.append([method, start, a.n_annotated, metric, f"{mean:.6f}", f"{std:.6f}"])

    agg_path = out_dir / "aggregate.csv"
    with agg_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(harness.AGGREGATE_HEADER)
        writer.writerows(aggregate_rows)
    long_path = out_dir / "metrics_long.csv"
    with long_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("method", "start", "n_annotated", "metric", "mean", "std"))
        writer.writerows(long_rows)
    print(f"wrote {agg_path}")
    print(f"wrote {long_path}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="bioal", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the configured base seed")
    common.add_argument("--out", default=".", help="output directory")

    p_synth = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p_synth.add_argument("--config", required=True, help="YAML config with a 'synthetic' block")
    p_synth.set_defaults(func=cmd_synth)

    p_val = sub.add_parser("validate", help="validate a dataset manifest and its binaries")
    p_val.add_argument("manifest", help="path to manifest.json")
    p_val.set_defaults(func=cmd_validate)

    p_run = sub.add_parser("run", parents=[common], help="run an experiment")
    p_run.add_argument("--config", required=True, help="YAML config with an 'experiment' block")
    p_run.add_argument("--trials", type=int, default=None, help="override the configured trial count")
    p_run.add_argument("--jobs", type=int, default=None, help="trial-level parallelism")
    p_run.add_argument("--with-full", action="store_true", help="also run the fully supervised reference")
    p_run.set_defaults(func=cmd_run)

    p_rep = sub.add_parser("report", parents=[common], help="aggregate results CSVs")
    p_rep.add_argument("results", nargs="+", help="results.csv files to merge")
    p_rep.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
