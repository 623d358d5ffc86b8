import json

import numpy as np
import pytest

from bioal.dataset import (
    FORMAT_VERSION,
    SplitSpec,
    SyntheticConfig,
    generate_synthetic,
    load_dataset,
    max_pool_time,
    split_dataset,
    write_dataset,
)
from bioal.errors import DataValidationError

from util import make_dataset


def write_raw_dataset(tmp_path, n, t, d, c, embeddings=None, labels=None, manifest_extra=None):
    """Write manifest + binaries by hand, bypassing the library writer."""
    if embeddings is None:
        embeddings = np.zeros((n, t, d), dtype="<f4")
    if labels is None:
        labels = np.zeros((n, t, c), dtype=np.uint8)
    (tmp_path / "embeddings.f32").write_bytes(np.asarray(embeddings, dtype="<f4").tobytes())
    (tmp_path / "labels.u8").write_bytes(np.asarray(labels, dtype=np.uint8).tobytes())
    manifest = {
        "format_version": FORMAT_VERSION,
        "n_samples": n,
        "n_segments": t,
        "embedding_dim": d,
        "n_classes": c,
        "class_names": [f"species_{i:02d}" for i in range(c)],
        "rare_class_indices": [],
        "embeddings_path": "embeddings.f32",
        "labels_path": "labels.u8",
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest), encoding="utf-8")
    return path


class TestMaxPoolTime:
    def test_elementwise_max(self):
        assert np.array_equal(max_pool_time([[1, 2], [3, 0]]), [3, 2])

    def test_single_segment_is_identity(self):
        assert np.array_equal(max_pool_time([[5.0, -1.0]]), [5.0, -1.0])

    def test_constant_rows(self):
        x = np.full((4, 3), 2.5)
        assert np.array_equal(max_pool_time(x), [2.5, 2.5, 2.5])

    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            max_pool_time(np.zeros(3))


class TestLoadDataset:
    def test_minimal_dataset(self, tmp_path):
        path = write_raw_dataset(
            tmp_path, 2, 1, 1, 1,
            embeddings=np.array([[[0.0]], [[1.0]]], dtype="<f4"),
            labels=np.array([[[0]], [[1]]], dtype=np.uint8),
        )
        ds = load_dataset(path)
        assert np.array_equal(ds.pooled_labels, [[0], [1]])
        assert np.array_equal(ds.pooled_embeddings, [[0.0], [1.0]])

    def test_labels_file_one_byte_short(self, tmp_path):
        path = write_raw_dataset(tmp_path, 2, 2, 2, 2)
        lab = tmp_path / "labels.u8"
        lab.write_bytes(lab.read_bytes()[:-1])
        with pytest.raises(DataValidationError, match=r"labels.*labels\.u8.*7 bytes, expected 8"):
            load_dataset(path)

    def test_embeddings_size_mismatch_reports_byte_counts(self, tmp_path):
        path = write_raw_dataset(tmp_path, 2, 2, 2, 2)
        (tmp_path / "embeddings.f32").write_bytes(b"\x00" * 10)
        with pytest.raises(DataValidationError, match=r"10 bytes, expected 32"):
            load_dataset(path)

    def test_nan_reports_first_sample_index(self, tmp_path):
        emb = np.zeros((5, 2, 2), dtype="<f4")
        emb[3, 1, 0] = np.nan
        path = write_raw_dataset(tmp_path, 5, 2, 2, 1, embeddings=emb)
        with pytest.raises(DataValidationError, match="non-finite embedding value at sample 3"):
            load_dataset(path)

    def test_bad_label_byte_reports_coordinates(self, tmp_path):
        lab = np.zeros((3, 2, 4), dtype=np.uint8)
        lab[2, 1, 3] = 2
        path = write_raw_dataset(tmp_path, 3, 2, 2, 4, labels=lab)
        with pytest.raises(DataValidationError, match="sample 2, segment 1, class 3"):
            load_dataset(path)

    def test_unknown_manifest_field_rejected(self, tmp_path):
        path = write_raw_dataset(tmp_path, 1, 1, 1, 1, manifest_extra={"surprise": 1})
        with pytest.raises(DataValidationError, match="unknown fields: surprise"):
            load_dataset(path)

    def test_missing_manifest_field_rejected(self, tmp_path):
        path = write_raw_dataset(tmp_path, 1, 1, 1, 1)
        manifest = json.loads(path.read_text())
        del manifest["labels_path"]
        path.write_text(json.dumps(manifest))
        with pytest.raises(DataValidationError, match="missing fields: labels_path"):
            load_dataset(path)

    def test_manifest_parse_failure(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text("{not json")
        with pytest.raises(DataValidationError, match="manifest parse failure"):
            load_dataset(path)

    def test_wrong_format_version(self, tmp_path):
        path = write_raw_dataset(tmp_path, 1, 1, 1, 1, manifest_extra={"format_version": 9})
        with pytest.raises(DataValidationError, match="format_version"):
            load_dataset(path)

    def test_duplicate_class_names_rejected(self, tmp_path):
        path = write_raw_dataset(
            tmp_path, 1, 1, 1, 2,
            labels=np.zeros((1, 1, 2), dtype=np.uint8),
            manifest_extra={"class_names": ["same", "same"]},
        )
        with pytest.raises(DataValidationError, match="distinct"):
            load_dataset(path)

    def test_dataset_is_immutable(self, tmp_path):
        path = write_raw_dataset(tmp_path, 2, 1, 1, 1)
        ds = load_dataset(path)
        with pytest.raises(ValueError):
            ds.embeddings[0, 0, 0] = 1.0
        with pytest.raises(ValueError):
            ds.pooled_labels[0, 0] = 1


class TestRoundTrip:
    def test_write_load_write_is_byte_identical(self, tmp_path):
        cfg = SyntheticConfig(
            n_samples=40, n_segments=3, embedding_dim=5, n_classes=3,
            negative_fraction=0.5, class_counts=(8, 7, 5), seed=9,
        )
        ds = generate_synthetic(cfg)
        first = tmp_path / "a"
        second = tmp_path / "b"
        manifest = write_dataset(ds, first)
        reloaded = load_dataset(manifest)
        write_dataset(reloaded, second)
        for name in ("embeddings.f32", "labels.u8"):
            assert (first / name).read_bytes() == (second / name).read_bytes()
        assert (first / "manifest.json").read_text() == (second / "manifest.json").read_text()


class TestSplitDataset:
    def _dataset(self, n):
        return make_dataset(np.zeros((n, 1, 2)), np.zeros((n, 1, 1)))

    def test_rounded_sizes(self):
        train, val, test = split_dataset(self._dataset(20), SplitSpec(0.7, 0.15, 0.15, seed=1))
        assert (len(train), len(val), len(test)) == (14, 3, 3)

    def test_partition_covers_everything(self):
        train, val, test = split_dataset(self._dataset(53), SplitSpec(0.7, 0.15, 0.15, seed=5))
        merged = np.sort(np.concatenate([train, val, test]))
        assert np.array_equal(merged, np.arange(53))

    def test_deterministic_for_fixed_seed(self):
        ds = self._dataset(30)
        a = split_dataset(ds, SplitSpec(seed=77))
        b = split_dataset(ds, SplitSpec(seed=77))
        for left, right in zip(a, b):
            assert np.array_equal(left, right)

    def test_different_seeds_differ(self):
        ds = self._dataset(100)
        a = split_dataset(ds, SplitSpec(seed=1))
        b = split_dataset(ds, SplitSpec(seed=2))
        assert not np.array_equal(a[0], b[0])

    def test_empty_split_is_an_error(self):
        with pytest.raises(DataValidationError, match="empty split"):
            split_dataset(self._dataset(2), SplitSpec(0.7, 0.15, 0.15, seed=0))

    def test_bad_fractions_rejected(self):
        with pytest.raises(DataValidationError):
            split_dataset(self._dataset(10), SplitSpec(0.5, 0.25, 0.35, seed=0))
        with pytest.raises(DataValidationError):
            split_dataset(self._dataset(10), SplitSpec(1.0, 0.0, 0.0, seed=0))


class TestGenerateSynthetic:
    def test_imbalanced_pool_keeps_negative_floor(self):
        cfg = SyntheticConfig(
            n_samples=1000, n_segments=4, embedding_dim=8, n_classes=7,
            negative_fraction=0.83, class_counts=(60, 50, 50, 20, 15, 19, 6),
            seed=3, rare_class_indices=(5, 6),
        )
        ds = generate_synthetic(cfg)
        all_zero = int(np.count_nonzero(~ds.pooled_labels.any(axis=1)))
        assert all_zero >= 810
        assert np.array_equal(ds.pooled_labels.sum(axis=0), cfg.class_counts)

    def test_no_negatives_when_counts_fill_the_pool(self):
        cfg = SyntheticConfig(
            n_samples=30, n_segments=2, embedding_dim=4, n_classes=3,
            negative_fraction=0.0, class_counts=(10, 10, 10), seed=4,
        )
        ds = generate_synthetic(cfg)
        assert int(np.count_nonzero(~ds.pooled_labels.any(axis=1))) == 0

    def test_deterministic_bytes(self):
        cfg = SyntheticConfig(
            n_samples=50, n_segments=3, embedding_dim=6, n_classes=2,
            negative_fraction=0.4, class_counts=(12, 9), seed=21,
        )
        a = generate_synthetic(cfg)
        b = generate_synthetic(cfg)
        assert a.embeddings.tobytes() == b.embeddings.tobytes()
        assert a.labels.tobytes() == b.labels.tobytes()

    def test_exact_class_counts_without_overlap(self):
        cfg = SyntheticConfig(
            n_samples=100, n_segments=4, embedding_dim=8, n_classes=3,
            negative_fraction=0.5, class_counts=(20, 15, 10), seed=8,
        )
        ds = generate_synthetic(cfg)
        assert np.array_equal(ds.pooled_labels.sum(axis=0), (20, 15, 10))
        # counts fit the positive pool disjointly: one class per positive sample
        assert ds.pooled_labels.sum(axis=1).max() == 1

    def test_infeasible_class_count_rejected(self):
        cfg = SyntheticConfig(
            n_samples=100, n_segments=4, embedding_dim=8, n_classes=2,
            negative_fraction=0.9, class_counts=(11, 2), seed=8,
        )
        with pytest.raises(DataValidationError, match="class 0 wants 11"):
            generate_synthetic(cfg)

    def test_pooled_arrays_match_brute_force(self):
        cfg = SyntheticConfig(
            n_samples=25, n_segments=5, embedding_dim=4, n_classes=3,
            negative_fraction=0.4, class_counts=(6, 5, 4), seed=2,
        )
        ds = generate_synthetic(cfg)
        for i in range(ds.n_samples):
            for c in range(ds.n_classes):
                expected = int(any(ds.labels[i, t, c] for t in range(ds.n_segments)))
                assert ds.pooled_labels[i, c] == expected
            assert np.array_equal(ds.pooled_embeddings[i], max_pool_time(ds.embeddings[i]))

    def test_event_density_controls_block_length(self):
        cfg = SyntheticConfig(
            n_samples=40, n_segments=8, embedding_dim=4, n_classes=1,
            negative_fraction=0.5, class_counts=(20,), event_density=0.25, seed=6,
        )
        ds = generate_synthetic(cfg)
        active = ds.labels.sum(axis=(1, 2))
        assert set(active[active > 0]) == {2}  # 0.25 * 8 segments
