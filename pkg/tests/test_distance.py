import itertools

import numpy as np
import pytest

from bioal.distance import (
    MinDistCache,
    argmax_min_dist,
    compiled_available,
    cosine_distance,
    cosine_distance_matrix,
    seed_cache,
    update_cache,
)

from util import brute_min_dist

BACKENDS = ["python"] + (["compiled"] if compiled_available() else [])

SQ2 = np.sqrt(2.0) / 2.0


class TestCosineDistance:
    def test_orthogonal(self):
        assert cosine_distance([1, 0], [0, 1]) == 1.0

    def test_identical_direction(self):
        assert cosine_distance([3, 4], [3, 4]) == 0.0

    def test_antipodal(self):
        assert cosine_distance([1, 0], [-1, 0]) == 2.0

    def test_both_zero_vectors(self):
        assert cosine_distance([0.0, 0.0], [0.0, 0.0]) == 0.0

    def test_single_zero_vector(self):
        assert cosine_distance([0.0, 0.0], [1.0, 2.0]) == 1.0
        assert cosine_distance([1.0, 2.0], [0.0, 0.0]) == 1.0

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a = rng.standard_normal(6)
            b = rng.standard_normal(6)
            assert cosine_distance(a, b) == cosine_distance(b, a)

    def test_scale_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            a = rng.standard_normal(5)
            b = rng.standard_normal(5)
            alpha = float(rng.uniform(0.01, 100.0))
            assert cosine_distance(alpha * a, b) == pytest.approx(cosine_distance(a, b), abs=1e-6)

    def test_range(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            d = cosine_distance(rng.standard_normal(4), rng.standard_normal(4))
            assert 0.0 <= d <= 2.0

    def test_matrix_agrees_with_scalar(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((5, 4))
        b = rng.standard_normal((6, 4))
        b[2] = 0.0
        mat = cosine_distance_matrix(a, b)
        for i in range(5):
            for j in range(6):
                assert mat[i, j] == pytest.approx(cosine_distance(a[i], b[j]), abs=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
class TestCache:
    def test_empty_seed_is_all_infinite(self, backend):
        pool = np.random.default_rng(0).standard_normal((6, 3))
        cache = seed_cache(pool, [], backend=backend)
        assert np.all(np.isinf(cache.min_dist))
        assert cache.n_selected == 0

    def test_singleton_seed_matches_pairwise(self, backend):
        pool = np.random.default_rng(1).standard_normal((7, 4))
        cache = seed_cache(pool, [2], backend=backend)
        for j in range(7):
            assert cache.min_dist[j] == pytest.approx(cosine_distance(pool[j], pool[2]), abs=1e-12)

    def test_pair_seed_is_elementwise_min_of_singletons(self, backend):
        pool = np.random.default_rng(2).standard_normal((4, 3))
        cache = seed_cache(pool, [1, 3], backend=backend)
        expected = brute_min_dist(pool, [1, 3])
        np.testing.assert_allclose(cache.min_dist, expected, atol=1e-12)

    def test_update_after_empty_seed_equals_singleton_seed(self, backend):
        pool = np.random.default_rng(3).standard_normal((5, 3))
        a = seed_cache(pool, [], backend=backend)
        update_cache(a, pool, 4)
        b = seed_cache(pool, [4], backend=backend)
        assert np.array_equal(a.min_dist, b.min_dist)
        assert a.n_selected == b.n_selected == 1

    def test_repeated_update_is_idempotent(self, backend):
        pool = np.random.default_rng(4).standard_normal((5, 3))
        cache = seed_cache(pool, [0], backend=backend)
        update_cache(cache, pool, 2)
        snapshot = cache.min_dist.copy()
        update_cache(cache, pool, 2)
        assert np.array_equal(cache.min_dist, snapshot)

    def test_update_order_does_not_matter(self, backend):
        pool = np.random.default_rng(5).standard_normal((5, 4))
        reference = None
        for order in itertools.permutations([0, 2, 4]):
            cache = seed_cache(pool, [], backend=backend)
            for idx in order:
                update_cache(cache, pool, idx)
            if reference is None:
                reference = cache.min_dist.copy()
            else:
                assert np.array_equal(cache.min_dist, reference)
        np.testing.assert_allclose(reference, brute_min_dist(pool, [0, 2, 4]), atol=1e-12)

    def test_out_of_range_index_rejected(self, backend):
        pool = np.zeros((3, 2))
        cache = seed_cache(pool, [], backend=backend)
        with pytest.raises(IndexError):
            update_cache(cache, pool, 3)
        with pytest.raises(IndexError):
            seed_cache(pool, [-1], backend=backend)

    def test_range_invariant_once_seeded(self, backend):
        rng = np.random.default_rng(6)
        pool = rng.standard_normal((30, 5))
        pool[7] = 0.0  # zero vector exercised too
        cache = seed_cache(pool, [0, 7, 12], backend=backend)
        assert np.all(cache.min_dist >= 0.0)
        assert np.all(cache.min_dist <= 2.0)

    def test_matches_brute_force_after_random_sequences(self, backend):
        rng = np.random.default_rng(7)
        for _ in range(25):
            n = int(rng.integers(2, 65))
            d = int(rng.integers(1, 9))
            pool = rng.standard_normal((n, d))
            k = int(rng.integers(1, min(n, 8) + 1))
            selected = list(rng.choice(n, size=k, replace=False))
            cache = seed_cache(pool, selected, backend=backend)
            np.testing.assert_allclose(cache.min_dist, brute_min_dist(pool, selected), atol=1e-6)


class TestArgmax:
    def _cache_with(self, values):
        cache = MinDistCache(np.zeros((len(values), 1)), backend="python")
        cache.min_dist = np.asarray(values, dtype=np.float64)
        return cache

    def test_unique_max(self):
        cache = self._cache_with([0.1, 0.9, 0.4])
        assert argmax_min_dist(cache, np.array([True, True, True])) == 1

    def test_tie_goes_to_lowest_index(self):
        cache = self._cache_with([0.5, 0.5])
        assert argmax_min_dist(cache, np.array([True, True])) == 0

    def test_mask_restricts_candidates(self):
        cache = self._cache_with([0.1, 0.9, 0.4])
        assert argmax_min_dist(cache, np.array([True, False, True])) == 2

    def test_empty_candidates_rejected(self):
        cache = self._cache_with([0.1])
        with pytest.raises(ValueError, match="empty candidate"):
            argmax_min_dist(cache, np.array([False]))

    def test_symmetric_pool_example(self):
        pool = np.array([[1.0, 0.0], [0.0, 1.0], [SQ2, SQ2]])
        cache = seed_cache(pool, [2])
        expected = 1.0 - SQ2
        assert cache.min_dist[0] == pytest.approx(expected, abs=1e-12)
        assert cache.min_dist[1] == pytest.approx(expected, abs=1e-12)
        assert argmax_min_dist(cache, np.array([True, True, False])) == 0


@pytest.mark.skipif(not compiled_available(), reason="compiled extension not built")
class TestBackendParity:
    def test_min_dist_agrees_within_tight_tolerance(self):
        rng = np.random.default_rng(8)
        pool = rng.standard_normal((128, 24))
        selected = list(rng.choice(128, size=10, replace=False))
        a = seed_cache(pool, selected, backend="compiled")
        b = seed_cache(pool, selected, backend="python")
        np.testing.assert_allclose(a.min_dist, b.min_dist, atol=1e-12)

    def test_greedy_pick_sequences_agree(self):
        rng = np.random.default_rng(9)
        pool = rng.standard_normal((64, 8))
        picks = {}
        for backend in ("compiled", "python"):
            cache = seed_cache(pool, [0], backend=backend)
            mask = np.ones(64, dtype=bool)
            mask[0] = False
            seq = []
            for _ in range(12):
                idx = argmax_min_dist(cache, mask)
                seq.append(idx)
                mask[idx] = False
                update_cache(cache, pool, idx)
            picks[backend] = seq
        assert picks["compiled"] == picks["python"]
