"""Embedding-pool data model: on-disk format, validation, temporal pooling,
splitting, and a synthetic generator with controllable class imbalance.

On-disk layout (produced by any external feature extractor):

* ``manifest.json``   UTF-8 JSON, exactly the DatasetManifest fields below.
* ``embeddings_path`` raw little-endian float32, row-major ``[N, T, D]``.
* ``labels_path``     raw bytes, each 0x00 or 0x01, row-major ``[N, T, C]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataValidationError

FORMAT_VERSION = 1

_MANIFEST_FIELDS = (
    "format_version",
    "n_samples",
    "n_segments",
    "embedding_dim",
    "n_classes",
    "class_names",
    "rare_class_indices",
    "embeddings_path",
    "labels_path",
)


@dataclass(frozen=True)
class DatasetManifest:
    format_version: int
    n_samples: int
    n_segments: int
    embedding_dim: int
    n_classes: int
    class_names: tuple[str, ...]
    rare_class_indices: tuple[int, ...]
    embeddings_path: str
    labels_path: str

    def validate(self) -> None:
        if self.format_version != FORMAT_VERSION:
            raise DataValidationError(
                f"unsupported format_version {self.format_version}; expected {FORMAT_VERSION}"
            )
        for name in ("n_samples", "n_segments", "embedding_dim", "n_classes"):
            if int(getattr(self, name)) < 1:
                raise DataValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if len(self.class_names) != self.n_classes:
            raise DataValidationError(
                f"class_names has {len(self.class_names)} entries, expected {self.n_classes}"
            )
        if len(set(self.class_names)) != len(self.class_names):
            raise DataValidationError("class_names must be distinct")
        rare = list(self.rare_class_indices)
        if len(set(rare)) != len(rare):
            raise DataValidationError("rare_class_indices contains duplicates")
        for c in rare:
            if not 0 <= int(c) < self.n_classes:
                raise DataValidationError(f"rare class index {c} out of range 0..{self.n_classes - 1}")


@dataclass(frozen=True)
class EmbeddingDataset:
    """Immutable pool of N samples with eagerly computed temporal max-pools."""

    manifest: DatasetManifest
    embeddings: np.ndarray  # [N, T, D] float32
    labels: np.ndarray  # [N, T, C] uint8
    pooled_embeddings: np.ndarray  # [N, D] float32
    pooled_labels: np.ndarray  # [N, C] uint8

    @property
    def n_samples(self) -> int:
        return self.manifest.n_samples

    @property
    def n_segments(self) -> int:
        return self.manifest.n_segments

    @property
    def embedding_dim(self) -> int:
        return self.manifest.embedding_dim

    @property
    def n_classes(self) -> int:
        return self.manifest.n_classes


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    val_fraction: float = 0.15
    test_fraction: float = 0.15
    seed: int = 0

    def validate(self) -> None:
        fractions = (self.train_fraction, self.val_fraction, self.test_fraction)
        for f in fractions:
            if not 0.0 < f < 1.0:
                raise DataValidationError(f"split fractions must lie in (0, 1), got {f}")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise DataValidationError(f"split fractions must sum to 1, got {sum(fractions)!r}")


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters of the synthetic embedding-pool generator.

    Positive samples of class c carry a contiguous block of active segments
    (fraction ``event_density`` of T) whose embeddings sit near the class's
    unit-vector centroid; everything else draws from an isotropic background
    cloud around a shared background centroid.  ``negative_fraction`` of the
    pool is reserved as pure background with all-zero labels; when
    ``class_counts`` outnumber the remaining samples, classes share samples
    (multi-label overlap) while per-class counts stay exact.
    """

    n_samples: int
    n_segments: int
    embedding_dim: int
    n_classes: int
    negative_fraction: float
    class_counts: tuple[int, ...]
    event_density: float = 0.5
    cluster_spread: float = 0.25
    seed: int = 0
    rare_class_indices: tuple[int, ...] = ()
    class_names: tuple[str, ...] = ()

    def validate(self) -> None:
        for name in ("n_samples", "n_segments", "embedding_dim", "n_classes"):
            if int(getattr(self, name)) < 1:
                raise DataValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.negative_fraction < 1.0:
            raise DataValidationError("negative_fraction must lie in [0, 1)")
        if len(self.class_counts) != self.n_classes:
            raise DataValidationError(
                f"class_counts has {len(self.class_counts)} entries, expected {self.n_classes}"
            )
        if any(int(c) < 0 for c in self.class_counts):
            raise DataValidationError("class_counts must be non-negative")
        if not 0.0 < self.event_density <= 1.0:
            raise DataValidationError("event_density must lie in (0, 1]")
        if self.cluster_spread <= 0.0:
            raise DataValidationError("cluster_spread must be positive")
        if self.class_names and len(self.class_names) != self.n_classes:
            raise DataValidationError("class_names, when given, must have n_classes entries")


def max_pool_time(x) -> np.ndarray:
    """Element-wise maximum over the segment axis of a [T, D] array."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("expected a [T, D] array with T >= 1")
    return x.max(axis=0)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def build_dataset(manifest: DatasetManifest, embeddings: np.ndarray, labels: np.ndarray) -> EmbeddingDataset:
    """Validate raw arrays against a manifest and assemble the pooled views."""
    manifest.validate()
    n, t, d, c = manifest.n_samples, manifest.n_segments, manifest.embedding_dim, manifest.n_classes
    embeddings = np.ascontiguousarray(embeddings, dtype=np.float32)
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    if embeddings.shape != (n, t, d):
        raise DataValidationError(f"embeddings shape {embeddings.shape}, expected {(n, t, d)}")
    if labels.shape != (n, t, c):
        raise DataValidationError(f"labels shape {labels.shape}, expected {(n, t, c)}")
    finite = np.isfinite(embeddings)
    if not finite.all():
        first = np.argwhere(~finite)[0]
        raise DataValidationError(
            f"non-finite embedding value at sample {first[0]} (segment {first[1]}, dim {first[2]})"
        )
    bad = (labels != 0) & (labels != 1)
    if bad.any():
        first = np.argwhere(bad)[0]
        raise DataValidationError(
            f"label byte {labels[tuple(first)]:#04x} not in {{0,1}} at sample {first[0]}, "
            f"segment {first[1]}, class {first[2]}"
        )
    pooled_embeddings = embeddings.max(axis=1)
    pooled_labels = labels.max(axis=1)
    return EmbeddingDataset(
        manifest=manifest,
        embeddings=_freeze(embeddings),
        labels=_freeze(labels),
        pooled_embeddings=_freeze(pooled_embeddings),
        pooled_labels=_freeze(pooled_labels),
    )


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataValidationError(f"manifest parse failure for {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataValidationError(f"manifest {path} must be a JSON object")
    unknown = sorted(set(raw) - set(_MANIFEST_FIELDS))
    if unknown:
        raise DataValidationError(f"manifest {path} has unknown fields: {', '.join(unknown)}")
    missing = sorted(set(_MANIFEST_FIELDS) - set(raw))
    if missing:
        raise DataValidationError(f"manifest {path} is missing fields: {', '.join(missing)}")
    try:
        manifest = DatasetManifest(
            format_version=int(raw["format_version"]),
            n_samples=int(raw["n_samples"]),
            n_segments=int(raw["n_segments"]),
            embedding_dim=int(raw["embedding_dim"]),
            n_classes=int(raw["n_classes"]),
            class_names=tuple(str(s) for s in raw["class_names"]),
            rare_class_indices=tuple(int(i) for i in raw["rare_class_indices"]),
            embeddings_path=str(raw["embeddings_path"]),
            labels_path=str(raw["labels_path"]),
        )
    except (TypeError, ValueError) as exc:
        raise DataValidationError(f"manifest {path} has malformed field values: {exc}") from exc
    manifest.validate()
    return manifest


def _read_exact(path: Path, expected_bytes: int, what: str) -> bytes:
    if not path.exists():
        raise DataValidationError(f"{what} file {path} does not exist")
    actual = path.stat().st_size
    if actual != expected_bytes:
        raise DataValidationError(
            f"{what} file {path} has {actual} bytes, expected {expected_bytes}"
        )
    return path.read_bytes()


def load_dataset(manifest_path) -> EmbeddingDataset:
    """Load and validate a dataset; pooled arrays are computed eagerly.

    File sizes are checked byte-exactly before decoding, embeddings are
    rejected on the first non-finite value, labels on the first byte
    outside {0, 1}.  The returned dataset's arrays are read-only.
    """
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    base = manifest_path.parent
    n, t, d, c = manifest.n_samples, manifest.n_segments, manifest.embedding_dim, manifest.n_classes
    emb_path = base / manifest.embeddings_path
    lab_path = base / manifest.labels_path
    emb_bytes = _read_exact(emb_path, n * t * d * 4, "embeddings")
    lab_bytes = _read_exact(lab_path, n * t * c, "labels")
    embeddings = np.frombuffer(emb_bytes, dtype="<f4").reshape(n, t, d).copy()
    labels = np.frombuffer(lab_bytes, dtype=np.uint8).reshape(n, t, c).copy()
    return build_dataset(manifest, embeddings, labels)


def write_dataset(ds: EmbeddingDataset, out_dir, manifest_name: str = "manifest.json") -> Path:
    """Write manifest + binary files; returns the manifest path.

    Round-trips byte-identically with load_dataset.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    m = ds.manifest
    (out_dir / m.embeddings_path).write_bytes(
        np.ascontiguousarray(ds.embeddings, dtype="<f4").tobytes()
    )
    (out_dir / m.labels_path).write_bytes(
        np.ascontiguousarray(ds.labels, dtype=np.uint8).tobytes()
    )
    manifest_path = out_dir / manifest_name
    payload = {
        "format_version": m.format_version,
        "n_samples": m.n_samples,
        "n_segments": m.n_segments,
        "embedding_dim": m.embedding_dim,
        "n_classes": m.n_classes,
        "class_names": list(m.class_names),
        "rare_class_indices": list(m.rare_class_indices),
        "embeddings_path": m.embeddings_path,
        "labels_path": m.labels_path,
    }
    manifest_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return manifest_path


def split_dataset(ds: EmbeddingDataset, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded shuffle of 0..N-1 partitioned at rounded fraction boundaries.

    Deterministic for a fixed seed; raises when any split would be empty.
    """
    spec.validate()
    n = ds.n_samples
    n_train = int(round(n * spec.train_fraction))
    n_trainval = int(round(n * (spec.train_fraction + spec.val_fraction)))
    n_val = n_trainval - n_train
    n_test = n - n_trainval
    if min(n_train, n_val, n_test) < 1:
        raise DataValidationError(
            f"split of {n} samples with fractions "
            f"({spec.train_fraction}, {spec.val_fraction}, {spec.test_fraction}) "
            f"leaves an empty split (sizes {n_train}, {n_val}, {n_test})"
        )
    perm = np.random.default_rng(spec.seed).permutation(n)
    return perm[:n_train].copy(), perm[n_train:n_trainval].copy(), perm[n_trainval:].copy()


def generate_synthetic(cfg: SyntheticConfig) -> EmbeddingDataset:
    """Deterministic synthetic pool mirroring a heavily imbalanced corpus.

    ``round(N * negative_fraction)`` samples are reserved as pure background;
    class c places ``class_counts[c]`` positive samples inside the remaining
    pool, wrapping around (and thereby sharing samples) only when the counts
    do not fit disjointly.  Per-class pooled-label counts match class_counts
    exactly.
    """
    cfg.validate()
    n, t, d, c = cfg.n_samples, cfg.n_segments, cfg.embedding_dim, cfg.n_classes
    n_negative = int(round(n * cfg.negative_fraction))
    pool_size = n - n_negative
    total = int(sum(cfg.class_counts))
    if total > 0 and pool_size < 1:
        raise DataValidationError(
            f"negative_fraction {cfg.negative_fraction} leaves no room for positive samples"
        )
    for ci, count in enumerate(cfg.class_counts):
        if count > pool_size:
            raise DataValidationError(
                f"class {ci} wants {count} positive samples but only {pool_size} "
                f"samples remain outside the negative_fraction reserve"
            )
    if total > n:
        raise DataValidationError(f"class_counts sum to {total} > n_samples {n}")

    rng = np.random.default_rng(cfg.seed)

    def _unit(v: np.ndarray) -> np.ndarray:
        return v / np.linalg.norm(v)

    background = _unit(rng.standard_normal(d))
    centroids = rng.standard_normal((c, d))
    centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)

    # One shuffled positive pool; classes take consecutive chunks with
    # wraparound, so a class never hits the same sample twice (count <= pool)
    # and overlap appears only once the pool is exhausted.
    pool = rng.permutation(n)[:pool_size] if pool_size > 0 else np.empty(0, dtype=np.intp)
    assignments: list[list[tuple[int, int]]] = [[] for _ in range(n)]  # sample -> [(class, offset)]
    block = max(1, int(round(cfg.event_density * t)))
    cursor = 0
    for ci, count in enumerate(cfg.class_counts):
        for _ in range(int(count)):
            sample = int(pool[cursor % pool_size])
            offset = int(rng.integers(0, t - block + 1))
            assignments[sample].append((ci, offset))
            cursor += 1

    embeddings = background + cfg.cluster_spread * rng.standard_normal((n, t, d))
    labels = np.zeros((n, t, c), dtype=np.uint8)
    for sample in range(n):
        for ci, offset in assignments[sample]:
            embeddings[sample, offset : offset + block] = centroids[ci] + (
                cfg.cluster_spread * rng.standard_normal((block, d))
            )
            labels[sample, offset : offset + block, ci] = 1

    names = cfg.class_names or tuple(f"species_{i:02d}" for i in range(c))
    manifest = DatasetManifest(
        format_version=FORMAT_VERSION,
        n_samples=n,
        n_segments=t,
        embedding_dim=d,
        n_classes=c,
        class_names=tuple(names),
        rare_class_indices=tuple(int(i) for i in cfg.rare_class_indices),
        embeddings_path="embeddings.f32",
        labels_path="labels.u8",
    )
    return build_dataset(manifest, embeddings.astype(np.float32), labels)
