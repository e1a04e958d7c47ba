import math

import numpy as np
import pytest

from uniap import (
    AffinityProfile,
    FeatureMap,
    TokenMask,
    affinity_profile,
    l2_normalize_rows,
    mean_mask_feature,
    row_softmax,
)
from uniap.errors import (
    DegenerateFeature,
    DimensionMismatch,
    EmptyMask,
    InvalidTemperature,
)

from helpers import random_feature_map


class TestL2NormalizeRows:
    def test_three_four_five(self):
        fm = FeatureMap(1, 1, 2, np.array([[3.0, 4.0]], dtype=np.float32))
        out = l2_normalize_rows(fm)
        np.testing.assert_allclose(out.data[0], [0.6, 0.8], atol=1e-7)
        assert out.normalized

    def test_unit_row_unchanged(self):
        fm = FeatureMap(1, 1, 2, np.array([[1.0, 0.0]], dtype=np.float32))
        np.testing.assert_allclose(l2_normalize_rows(fm).data[0], [1.0, 0.0])

    def test_zero_norm_rejected(self):
        fm = FeatureMap(1, 1, 2, np.array([[1e-15, 0.0]], dtype=np.float32))
        with pytest.raises(DegenerateFeature):
            l2_normalize_rows(fm)

    def test_input_unchanged(self):
        data = np.array([[3.0, 4.0]], dtype=np.float32)
        fm = FeatureMap(1, 1, 2, data)
        l2_normalize_rows(fm)
        np.testing.assert_array_equal(fm.data, [[3.0, 4.0]])

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            fm = FeatureMap(3, 4, 6, rng.standard_normal((12, 6)).astype(np.float32))
            once = l2_normalize_rows(fm)
            twice = l2_normalize_rows(once)
            np.testing.assert_allclose(twice.data, once.data, atol=1e-6)


class TestRowSoftmax:
    def test_constant_input_uniform(self):
        for sigma in (0.07, 1.0, 5.0):
            np.testing.assert_allclose(
                row_softmax(np.array([2.5, 2.5, 2.5]), sigma), [1 / 3] * 3, atol=1e-12
            )

    def test_sharp_temperature(self):
        # closed form: p1 = exp(-1/0.07) / (1 + exp(-1/0.07))
        p = row_softmax(np.array([1.0, 0.0]), 0.07)
        expect1 = math.exp(-1 / 0.07) / (1 + math.exp(-1 / 0.07))
        np.testing.assert_allclose(p, [1 - expect1, expect1], rtol=1e-12)
        assert p[1] == pytest.approx(6.2e-7, rel=1e-2)

    def test_log_three(self):
        p = row_softmax(np.array([0.0, math.log(3)]), 1.0)
        np.testing.assert_allclose(p, [0.25, 0.75], atol=1e-12)

    def test_sums_to_one_and_positive(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            v = rng.standard_normal(rng.integers(1, 40)) * rng.uniform(0.1, 100)
            p = row_softmax(v, rng.uniform(0.01, 10))
            assert abs(p.sum() - 1.0) <= 1e-6
            assert (p > 0).all()

    def test_matrix_rows(self):
        p = row_softmax(np.zeros((3, 5)), 0.5)
        np.testing.assert_allclose(p, np.full((3, 5), 0.2))

    def test_invalid_temperature(self):
        with pytest.raises(InvalidTemperature):
            row_softmax(np.array([1.0]), 0.0)
        with pytest.raises(InvalidTemperature):
            row_softmax(np.array([1.0]), -1.0)

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidTemperature):
            row_softmax(np.array([np.inf, 0.0]), 1.0)


class TestMeanMaskFeature:
    def test_singleton(self):
        fm = random_feature_map(np.random.default_rng(2), 2, 3, 4)
        m = TokenMask.from_indices(6, [4])
        np.testing.assert_allclose(mean_mask_feature(fm, m), fm.data[4], atol=1e-7)

    def test_duplicate_rows(self):
        row = np.array([0.6, 0.8], dtype=np.float32)
        fm = FeatureMap(1, 2, 2, np.stack([row, row]), normalized=True)
        m = TokenMask.from_indices(2, [0, 1])
        np.testing.assert_allclose(mean_mask_feature(fm, m), row, atol=1e-7)

    def test_two_basis_rows(self):
        fm = FeatureMap(
            1, 2, 2, np.array([[1, 0], [0, 1]], dtype=np.float32), normalized=True
        )
        m = TokenMask.from_indices(2, [0, 1])
        np.testing.assert_allclose(mean_mask_feature(fm, m), [0.5, 0.5])

    def test_empty_mask(self):
        fm = random_feature_map(np.random.default_rng(3), 2, 2, 3)
        with pytest.raises(EmptyMask):
            mean_mask_feature(fm, TokenMask(np.zeros(4, dtype=bool)))

    def test_length_mismatch(self):
        fm = random_feature_map(np.random.default_rng(4), 2, 2, 3)
        with pytest.raises(DimensionMismatch):
            mean_mask_feature(fm, TokenMask(np.zeros(5, dtype=bool)))


class TestAffinityProfile:
    def test_self_affinity(self):
        fm = random_feature_map(np.random.default_rng(5), 3, 3, 8)
        prof = affinity_profile(fm, fm.data[0].astype(np.float64))
        assert prof.values[0] == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal_aggregate(self):
        fm = FeatureMap(
            1, 2, 3, np.array([[1, 0, 0], [0, 1, 0]], dtype=np.float32), normalized=True
        )
        prof = affinity_profile(fm, np.array([0.0, 0.0, 1.0]))
        np.testing.assert_allclose(prof.values, [0.0, 0.0])

    def test_two_token_map(self):
        fm = FeatureMap(
            1, 2, 2, np.array([[1, 0], [0, 1]], dtype=np.float32), normalized=True
        )
        prof = affinity_profile(fm, np.array([1.0, 0.0]))
        np.testing.assert_allclose(prof.values, [1.0, 0.0])

    def test_dimension_mismatch(self):
        fm = random_feature_map(np.random.default_rng(6), 2, 2, 3)
        with pytest.raises(DimensionMismatch):
            affinity_profile(fm, np.zeros(4))

    def test_requires_normalized(self):
        fm = FeatureMap(1, 1, 2, np.array([[3.0, 4.0]], dtype=np.float32))
        with pytest.raises(ValueError):
            affinity_profile(fm, np.array([1.0, 0.0]))

    def test_matches_materialized_affinity_matrix(self):
        # oracle: build A = F F^T outright and compare the row combination
        rng = np.random.default_rng(7)
        for _ in range(10):
            h, w = int(rng.integers(2, 16)), int(rng.integers(2, 16))
            if h * w > 256:
                continue
            fm = random_feature_map(rng, h, w, int(rng.integers(2, 12)))
            f64 = fm.data.astype(np.float64)
            a_full = f64 @ f64.T
            size = h * w
            idx = rng.choice(size, size=int(rng.integers(1, size + 1)), replace=False)
            mask = TokenMask.from_indices(size, idx)
            prof = affinity_profile(fm, mean_mask_feature(fm, mask))
            expected = a_full[idx].mean(axis=0)
            np.testing.assert_allclose(prof.values, expected, atol=1e-5)

    def test_profile_bounds_for_unit_rows(self):
        rng = np.random.default_rng(8)
        fm = random_feature_map(rng, 5, 5, 6)
        prof = affinity_profile(fm, fm.data[3].astype(np.float64))
        assert np.all(prof.values >= -1 - 1e-5) and np.all(prof.values <= 1 + 1e-5)
        assert isinstance(prof, AffinityProfile)
