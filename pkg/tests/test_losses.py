"""Training-loss structure and differentiability."""

import numpy as np
import pytest

from emikit.errors import ConfigError, ShapeError, ValidationError
from emikit.losses import LossConfig, batch_ccc, combined_loss
from emikit.tensor import Tensor

from oracles import ccc_ref, grad_check


@pytest.fixture
def rng():
    return np.random.default_rng(77)


class TestLossConfig:
    def test_defaults(self):
        cfg = LossConfig()
        assert cfg.alpha == 0.7
        assert cfg.epsilon == 1e-8

    def test_alpha_range_enforced(self):
        with pytest.raises(ConfigError):
            LossConfig(alpha=1.5)
        with pytest.raises(ConfigError):
            LossConfig(alpha=-0.1)


class TestBatchCcc:
    def test_matches_per_dimension_oracle(self, rng):
        pred = rng.standard_normal((16, 6))
        target = rng.standard_normal((16, 6))
        out = batch_ccc(Tensor(pred), Tensor(target), epsilon=0.0).data
        for d in range(6):
            assert out[d] == pytest.approx(ccc_ref(pred[:, d], target[:, d]), abs=1e-9)

    def test_batch_of_one_rejected(self, rng):
        with pytest.raises(ValidationError, match="at least 2"):
            batch_ccc(Tensor(rng.standard_normal((1, 6))),
                      Tensor(rng.standard_normal((1, 6))))

    def test_shape_mismatch_rejected(self, rng):
        with pytest.raises(ShapeError):
            batch_ccc(Tensor(rng.standard_normal((4, 6))),
                      Tensor(rng.standard_normal((4, 5))))

    def test_constant_columns_give_zero(self):
        pred = Tensor(np.full((8, 6), 0.3))
        target = Tensor(np.full((8, 6), 0.3))
        out = batch_ccc(pred, target).data
        np.testing.assert_allclose(out, 0.0, atol=1e-6)


class TestCombinedLoss:
    def test_zero_when_pred_equals_target(self, rng):
        y = rng.uniform(0, 1, size=(10, 6))
        for alpha in (0.0, 0.7, 1.0):
            loss = combined_loss(Tensor(y), y, LossConfig(alpha=alpha))
            assert loss.item() < 1e-5

    def test_alpha_zero_is_pure_mse(self, rng):
        pred = rng.standard_normal((12, 6))
        target = rng.standard_normal((12, 6))
        loss = combined_loss(Tensor(pred), target, LossConfig(alpha=0.0))
        assert loss.item() == pytest.approx(np.mean((pred - target) ** 2), rel=1e-6)

    def test_alpha_one_is_pure_ccc_term(self, rng):
        pred = rng.standard_normal((12, 6))
        target = rng.standard_normal((12, 6))
        loss = combined_loss(Tensor(pred), target, LossConfig(alpha=1.0, epsilon=0.0))
        expected = 1.0 - np.mean([ccc_ref(pred[:, d], target[:, d]) for d in range(6)])
        assert loss.item() == pytest.approx(expected, rel=1e-9)

    def test_blend_arithmetic(self, rng):
        pred = rng.standard_normal((8, 6))
        target = rng.standard_normal((8, 6))
        l0 = combined_loss(Tensor(pred), target, LossConfig(alpha=0.0)).item()
        l1 = combined_loss(Tensor(pred), target, LossConfig(alpha=1.0)).item()
        l_mix = combined_loss(Tensor(pred), target, LossConfig(alpha=0.7)).item()
        assert l_mix == pytest.approx(0.7 * l1 + 0.3 * l0, rel=1e-9)

    def test_gradient_matches_finite_differences(self, rng):
        pred = Tensor(rng.standard_normal((8, 6)), requires_grad=True)
        target = rng.standard_normal((8, 6))
        cfg = LossConfig(alpha=0.7)
        grad_check(lambda: combined_loss(pred, target, cfg), [pred], rng, max_coords=24)

    def test_gradient_alpha_boundaries(self, rng):
        target = rng.standard_normal((6, 6))
        for alpha in (0.0, 1.0):
            pred = Tensor(rng.standard_normal((6, 6)), requires_grad=True)
            cfg = LossConfig(alpha=alpha)
            grad_check(lambda: combined_loss(pred, target, cfg), [pred], rng)
