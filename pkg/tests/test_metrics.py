"""Correlation metrics against closed forms and independent oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emikit.errors import ValidationError
from emikit.metrics import average_pearson, ccc, mse, pearson

from oracles import ccc_ref, pearson_ref


class TestPearson:
    def test_perfect_linear(self):
        assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0, abs=1e-7)

    def test_perfect_anticorrelation(self):
        assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0, abs=1e-7)

    def test_constant_pred_convention(self):
        assert pearson([1.0, 1.0, 1.0], [0.2, 0.9, 0.4]) == 0.0
        assert pearson([0.2, 0.9, 0.4], [1.0, 1.0, 1.0]) == 0.0

    def test_matches_oracle_on_random_pairs(self):
        rng = np.random.default_rng(21)
        for _ in range(300):
            n = int(rng.integers(2, 40))
            p = rng.standard_normal(n)
            t = rng.standard_normal(n)
            assert pearson(p, t, epsilon=0.0) == pytest.approx(pearson_ref(p, t), abs=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            pearson([1, 2], [1, 2, 3])

    def test_too_short(self):
        with pytest.raises(ValidationError):
            pearson([1.0], [1.0])

    @given(scale=st.floats(1e-3, 1e3), seed=st.integers(0, 2**16))
    @settings(max_examples=50, deadline=None)
    def test_scale_invariance(self, scale, seed):
        rng = np.random.default_rng(seed)
        p = rng.standard_normal(20)
        t = rng.standard_normal(20)
        base = pearson(p, t, epsilon=0.0)
        scaled = pearson(p * scale, t * scale, epsilon=0.0)
        assert scaled == pytest.approx(base, abs=1e-9)


class TestCcc:
    def test_identity(self):
        y = np.array([0.1, 0.4, 0.9, 0.3])
        assert ccc(y, y) == pytest.approx(1.0, abs=1e-6)

    def test_shift_closed_form(self):
        # target [0,1], pred = target + 1: var 0.25 each, gap 1
        # -> 2*0.25 / (0.25 + 0.25 + 1) = 1/3
        target = np.array([0.0, 1.0])
        assert ccc(target + 1.0, target, epsilon=0.0) == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_not_shift_invariant_unlike_pearson(self):
        target = np.array([0.0, 1.0])
        assert pearson(target + 1.0, target, epsilon=0.0) == pytest.approx(1.0, abs=1e-12)
        assert ccc(target + 1.0, target, epsilon=0.0) < 1.0

    def test_both_constant_convention(self):
        assert ccc([0.5, 0.5], [0.5, 0.5]) == 0.0

    def test_matches_oracle_on_random_pairs(self):
        rng = np.random.default_rng(22)
        for _ in range(300):
            n = int(rng.integers(2, 120))
            p = rng.standard_normal(n) * rng.uniform(0.1, 3)
            t = rng.standard_normal(n) + rng.uniform(-1, 1)
            assert ccc(p, t, epsilon=0.0) == pytest.approx(ccc_ref(p, t), abs=1e-9)

    @given(seed=st.integers(0, 2**16))
    @settings(max_examples=200, deadline=None)
    def test_ccc_bounded_by_pearson(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 50))
        p = rng.standard_normal(n) * rng.uniform(0.05, 5)
        t = rng.standard_normal(n) * rng.uniform(0.05, 5) + rng.uniform(-2, 2)
        assert abs(ccc(p, t, epsilon=0.0)) <= abs(pearson(p, t, epsilon=0.0)) + 1e-12


class TestAveragePearson:
    def test_perfect_predictions(self):
        rng = np.random.default_rng(23)
        y = rng.uniform(0, 1, size=(30, 6))
        report = average_pearson(y, y)
        np.testing.assert_allclose(report.pearson_per_dim, 1.0, atol=1e-9)
        assert report.average_pearson == pytest.approx(1.0, abs=1e-9)
        assert report.mse == pytest.approx(0.0, abs=1e-12)

    def test_constant_dimension_drags_average(self):
        rng = np.random.default_rng(24)
        y = rng.uniform(0, 1, size=(25, 6))
        pred = y.copy()
        pred[:, 2] = 0.5
        report = average_pearson(pred, y)
        assert report.pearson_per_dim[2] == 0.0
        assert report.average_pearson == pytest.approx(5.0 / 6.0, abs=1e-9)

    def test_average_is_mean_of_per_dim_bitwise(self):
        rng = np.random.default_rng(25)
        pred = rng.standard_normal((40, 6))
        target = rng.standard_normal((40, 6))
        report = average_pearson(pred, target)
        assert report.average_pearson == sum(report.pearson_per_dim) / 6.0

    def test_per_dim_matches_oracle(self):
        rng = np.random.default_rng(26)
        pred = rng.standard_normal((60, 6))
        target = rng.standard_normal((60, 6))
        report = average_pearson(pred, target, epsilon=0.0)
        for d in range(6):
            assert report.pearson_per_dim[d] == pytest.approx(
                pearson_ref(pred[:, d], target[:, d]), abs=1e-9
            )
            assert report.ccc_per_dim[d] == pytest.approx(
                ccc_ref(pred[:, d], target[:, d]), abs=1e-9
            )

    def test_sample_count_and_mse(self):
        pred = np.zeros((4, 6))
        target = np.full((4, 6), 0.5)
        report = average_pearson(pred, target)
        assert report.sample_count == 4
        assert report.mse == pytest.approx(0.25, abs=1e-12)

    def test_needs_two_rows(self):
        with pytest.raises(ValidationError):
            average_pearson(np.zeros((1, 6)), np.zeros((1, 6)))

    def test_needs_six_columns(self):
        with pytest.raises(ValidationError):
            average_pearson(np.zeros((4, 5)), np.zeros((4, 5)))


class TestMse:
    def test_known_value(self):
        assert mse([1.0, 2.0], [0.0, 0.0]) == pytest.approx(2.5, abs=1e-12)

    def test_zero_on_equal(self):
        assert mse([0.3, 0.7], [0.3, 0.7]) == 0.0
