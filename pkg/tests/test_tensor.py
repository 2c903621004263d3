"""Autodiff engine tests: forward closed forms, finite-difference gradients,
tape lifecycle, and broadcasting rules."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emikit import tensor as T
from emikit.errors import ConfigError, DegenerateMaskError, ShapeError, TapeError
from emikit.tensor import Tensor, backward

from oracles import grad_check


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def leaf(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


class TestForwardValues:
    def test_gelu_known_points(self):
        x = Tensor(np.array([0.0, 1.0, -1.0], dtype=np.float64))
        out = T.gelu(x).data
        # x * Phi(x) at 0, 1, -1
        np.testing.assert_allclose(out[0], 0.0, atol=1e-15)
        np.testing.assert_allclose(out[1], 0.8413447460685429, rtol=1e-12)
        np.testing.assert_allclose(out[2], -0.15865525393145707, rtol=1e-12)

    def test_matmul_matches_triple_loop(self, rng):
        a = rng.standard_normal((3, 4))
        b = rng.standard_normal((4, 5))
        out = T.matmul(Tensor(a), Tensor(b)).data
        ref = np.zeros((3, 5))
        for i in range(3):
            for j in range(5):
                for k in range(4):
                    ref[i, j] += a[i, k] * b[k, j]
        np.testing.assert_allclose(out, ref, rtol=1e-12)

    def test_matmul_rejects_bad_shapes(self, rng):
        with pytest.raises(ShapeError):
            T.matmul(leaf(rng, 2, 3), leaf(rng, 4, 5))
        with pytest.raises(ShapeError):
            T.matmul(leaf(rng, 3), leaf(rng, 3, 2))

    def test_layer_norm_standardizes(self, rng):
        x = leaf(rng, 4, 16)
        gain = Tensor(np.ones(16), requires_grad=True)
        bias = Tensor(np.zeros(16), requires_grad=True)
        out = T.layer_norm(x, gain, bias, eps=1e-5).data
        np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-4)

    def test_layer_norm_needs_positive_eps(self, rng):
        x = leaf(rng, 2, 4)
        with pytest.raises(ConfigError):
            T.layer_norm(x, Tensor(np.ones(4)), Tensor(np.zeros(4)), eps=0.0)

    def test_masked_softmax_exclusion(self):
        scores = Tensor(np.array([5.0, 1.0, 1.0, -50.0]))
        mask = np.array([False, True, True, False])
        w = T.masked_softmax(scores, mask).data
        assert w[0] == 0.0 and w[3] == 0.0  # excluded, not merely tiny
        np.testing.assert_allclose(w[1], 0.5, rtol=1e-12)
        np.testing.assert_allclose(w[2], 0.5, rtol=1e-12)
        np.testing.assert_allclose(w.sum(), 1.0, rtol=1e-12)

    def test_masked_softmax_all_masked(self):
        with pytest.raises(DegenerateMaskError):
            T.masked_softmax(Tensor(np.array([1.0, 2.0])), np.array([False, False]))

    def test_concat_layout(self, rng):
        parts = [leaf(rng, 2, 3), leaf(rng, 2, 1), leaf(rng, 2, 4)]
        out = T.concat(parts, axis=-1)
        assert out.shape == (2, 8)
        np.testing.assert_array_equal(out.data[:, 3:4], parts[1].data)

    def test_dropout_eval_is_identity(self, rng):
        x = leaf(rng, 8)
        assert T.dropout(x, 0.45, training=False) is x
        assert T.dropout(x, 0.0, training=True) is x

    def test_dropout_rejects_p_of_one(self, rng):
        with pytest.raises(ConfigError):
            T.dropout(leaf(rng, 4), 1.0, training=True, rng=rng)

    def test_dropout_inverted_scaling(self):
        rng = np.random.default_rng(7)
        x = Tensor(np.ones(200_000))
        out = T.dropout(x, 0.45, training=True, rng=rng).data
        kept = out[out != 0.0]
        np.testing.assert_allclose(kept, 1.0 / 0.55, rtol=1e-12)
        # surviving fraction concentrates around 1 - p
        assert abs(len(kept) / len(out.reshape(-1)) - 0.55) < 0.01
        # unbiased in expectation
        assert abs(out.mean() - 1.0) < 0.01


class TestGradients:
    """Central finite differences at double precision against the tape."""

    def test_elementwise_chain(self, rng):
        a = leaf(rng, 3, 4)
        b = leaf(rng, 3, 4)
        grad_check(lambda: ((a * b + a) / (b * b + 2.0)).sum(), [a, b], rng)

    def test_broadcast_add_and_mul(self, rng):
        mat = leaf(rng, 5, 3)
        row = leaf(rng, 3)
        grad_check(lambda: ((mat + row) * row).mean(), [mat, row], rng)

    def test_matmul(self, rng):
        a = leaf(rng, 4, 6)
        b = leaf(rng, 6, 2)
        grad_check(lambda: T.matmul(a, b).sum(), [a, b], rng)

    def test_reductions(self, rng):
        x = leaf(rng, 4, 5)
        grad_check(lambda: x.mean(axis=0).sum(), [x], rng)
        grad_check(lambda: x.sum(axis=1).mean(), [x], rng)
        grad_check(lambda: x.mean(axis=1, keepdims=True).sum(), [x], rng)

    def test_gelu(self, rng):
        x = leaf(rng, 30)
        grad_check(lambda: T.gelu(x).sum(), [x], rng, max_coords=30)

    def test_layer_norm(self, rng):
        x = leaf(rng, 3, 8)
        gain = leaf(rng, 8)
        bias = leaf(rng, 8)
        grad_check(lambda: (T.layer_norm(x, gain, bias) * x).sum(), [x, gain, bias], rng)

    def test_masked_softmax(self, rng):
        scores = leaf(rng, 7)
        mask = np.array([True, True, False, True, False, True, True])
        weights = Tensor(rng.standard_normal(7))
        grad_check(lambda: (T.masked_softmax(scores, mask) * weights).sum(), [scores], rng)

    def test_concat_and_reshape(self, rng):
        a = leaf(rng, 2, 3)
        b = leaf(rng, 2, 2)
        grad_check(
            lambda: (T.concat([a, b], axis=-1).reshape(10) * 1.5).sum(), [a, b], rng
        )

    def test_dropout_grad_is_scaled_mask(self):
        x = Tensor(np.ones(64), requires_grad=True)
        out = T.dropout(x, 0.25, training=True, rng=np.random.default_rng(3))
        backward(out.sum())
        mask = out.data != 0.0
        np.testing.assert_allclose(x.grad[mask], 1.0 / 0.75, rtol=1e-12)
        np.testing.assert_allclose(x.grad[~mask], 0.0, atol=0.0)


class TestTapeLifecycle:
    def test_backward_requires_scalar(self, rng):
        x = leaf(rng, 3)
        y = x * 2.0
        with pytest.raises(ShapeError):
            backward(y)
        T.clear_tape()

    def test_backward_clears_tape(self, rng):
        x = leaf(rng, 3)
        backward((x * x).sum())
        assert T.tape_size() == 0
        with pytest.raises(TapeError):
            backward(Tensor(np.array(1.0), requires_grad=True))

    def test_second_backward_without_forward(self, rng):
        x = leaf(rng, 3)
        loss = (x * x).sum()
        backward(loss)
        with pytest.raises(TapeError):
            backward(loss)

    def test_grad_accumulates_across_uses(self, rng):
        x = leaf(rng, 4)
        backward((x + x).sum())
        np.testing.assert_allclose(x.grad, 2.0, rtol=1e-12)

    def test_no_grad_suppresses_recording(self, rng):
        x = leaf(rng, 3)
        with T.no_grad():
            y = (x * x).sum()
        assert T.tape_size() == 0
        assert not y.requires_grad

    def test_constants_do_not_record(self):
        a = Tensor(np.ones(3))
        b = Tensor(np.ones(3))
        _ = a + b
        assert T.tape_size() == 0


class TestProperties:
    @given(shift=st.floats(-50, 50), seed=st.integers(0, 2**16))
    @settings(max_examples=40, deadline=None)
    def test_layer_norm_shift_invariance(self, shift, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((2, 6))
        gain = Tensor(np.ones(6))
        bias = Tensor(np.zeros(6))
        base = T.layer_norm(Tensor(x), gain, bias).data
        moved = T.layer_norm(Tensor(x + shift), gain, bias).data
        np.testing.assert_allclose(moved, base, atol=1e-7)

    @given(shift=st.floats(-30, 30), seed=st.integers(0, 2**16))
    @settings(max_examples=40, deadline=None)
    def test_masked_softmax_shift_invariance(self, shift, seed):
        rng = np.random.default_rng(seed)
        scores = rng.standard_normal(5)
        mask = np.array([True, False, True, True, False])
        base = T.masked_softmax(Tensor(scores), mask).data
        moved = T.masked_softmax(Tensor(scores + shift), mask).data
        np.testing.assert_allclose(moved, base, atol=1e-9)

    @given(seed=st.integers(0, 2**16))
    @settings(max_examples=25, deadline=None)
    def test_masked_softmax_is_distribution(self, seed):
        rng = np.random.default_rng(seed)
        scores = rng.standard_normal(8) * 5
        mask = rng.random(8) < 0.6
        if not mask.any():
            mask[0] = True
        w = T.masked_softmax(Tensor(scores), mask).data
        assert (w >= 0).all()
        np.testing.assert_allclose(w.sum(), 1.0, rtol=1e-9)
        assert (w[~mask] == 0.0).all()
