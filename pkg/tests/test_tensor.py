"""Unit tests for the autodiff tensor core."""

import statistics

import numpy as np
import pytest

import spafit.tensor as T
from spafit.errors import GraphError, ShapeError
from spafit.tensor import Tensor


class TestMatmul:
    def test_identity(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = T.matmul(Tensor(np.eye(2)), a)
        np.testing.assert_array_equal(out.data, a.data)

    def test_hand_product(self):
        out = T.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        np.testing.assert_array_equal(out.data, [[11.0]])

    def test_zero_annihilates(self):
        rng = np.random.default_rng(0)
        b = Tensor(rng.standard_normal((3, 4)))
        out = T.matmul(Tensor(np.zeros((2, 3))), b)
        np.testing.assert_array_equal(out.data, np.zeros((2, 4)))

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_batched_weight_gradient_sums_over_batch(self):
        rng = np.random.default_rng(1)
        x = Tensor(rng.standard_normal((4, 5, 3)))
        w = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
        T.tensor_sum(T.matmul(x, w)).backward()
        expected = np.einsum("bsi,bsj->ij", x.data, np.ones((4, 5, 2)))
        np.testing.assert_allclose(w.grad, expected, rtol=1e-12)


class TestSoftmax:
    def test_symmetry(self):
        out = T.softmax(Tensor([0.0, 0.0]))
        np.testing.assert_allclose(out.data, [0.5, 0.5], atol=1e-15)

    def test_exponent_ratios(self):
        out = T.softmax(Tensor([np.log(1.0), np.log(3.0)]))
        np.testing.assert_allclose(out.data, [0.25, 0.75], atol=1e-12)

    def test_shift_invariance(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((5, 7))
        a = T.softmax(Tensor(x)).data
        b = T.softmax(Tensor(x + 123.456)).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        out = T.softmax(Tensor(rng.standard_normal((10, 9)) * 50))
        np.testing.assert_allclose(out.data.sum(axis=-1), np.ones(10), atol=1e-12)
        assert (out.data >= 0).all()


class TestLayerNorm:
    def _gamma_beta(self, d, gamma=1.0, beta=0.0):
        return Tensor(np.full(d, gamma)), Tensor(np.full(d, beta))

    def test_constant_row_maps_to_beta(self):
        g, b = self._gamma_beta(4, beta=0.0)
        out = T.layer_norm(Tensor([5.0, 5.0, 5.0, 5.0]), g, b)
        np.testing.assert_allclose(out.data, np.zeros(4), atol=1e-6)

    def test_two_point_row(self):
        g, b = self._gamma_beta(2)
        out = T.layer_norm(Tensor([1.0, 3.0]), g, b)
        np.testing.assert_allclose(out.data, [-1.0, 1.0], atol=1e-9)

    def test_zero_gamma_gives_beta(self):
        rng = np.random.default_rng(4)
        g = Tensor(np.zeros(6))
        b = Tensor(rng.standard_normal(6))
        out = T.layer_norm(Tensor(rng.standard_normal((3, 6))), g, b)
        np.testing.assert_array_equal(out.data, np.broadcast_to(b.data, (3, 6)))

    def test_normalized_rows_have_zero_mean_unit_variance(self):
        rng = np.random.default_rng(5)
        d = 16
        g, b = self._gamma_beta(d)
        out = T.layer_norm(Tensor(rng.standard_normal((8, d)) * 3 + 2), g, b)
        assert np.abs(out.data.mean(axis=-1)).max() < 1e-10
        np.testing.assert_allclose(out.data.var(axis=-1), np.ones(8), atol=1e-8)

    def test_empty_dimension_rejected(self):
        with pytest.raises(ShapeError):
            T.layer_norm(Tensor(np.zeros((2, 0))), Tensor(np.zeros(0)), Tensor(np.zeros(0)))


class TestGelu:
    def test_zero(self):
        assert T.gelu(Tensor([0.0])).data[0] == 0.0

    def test_unit_value_matches_normal_cdf_oracle(self):
        # independent oracle: the stdlib normal CDF
        expected = 1.0 * statistics.NormalDist().cdf(1.0)
        assert abs(T.gelu(Tensor([1.0])).data[0] - expected) < 1e-12

    def test_asymptote(self):
        assert abs(T.gelu(Tensor([10.0])).data[0] - 10.0) < 1e-9


class TestDropout:
    def test_eval_mode_is_identity(self):
        x = Tensor(np.arange(6.0))
        out = T.dropout(x, 0.7, "eval")
        np.testing.assert_array_equal(out.data, x.data)

    def test_p_zero_is_identity(self):
        x = Tensor(np.arange(6.0))
        out = T.dropout(x, 0.0, "train", np.random.default_rng(0))
        np.testing.assert_array_equal(out.data, x.data)

    def test_inverted_scaling_preserves_mean(self):
        x = Tensor(np.ones(1_000_000))
        out = T.dropout(x, 0.5, "train", np.random.default_rng(42))
        assert abs(out.data.mean() - 1.0) < 0.01

    def test_p_one_rejected(self):
        with pytest.raises(ValueError):
            T.dropout(Tensor([1.0]), 1.0, "train", np.random.default_rng(0))

    def test_same_seed_same_mask(self):
        x = Tensor(np.ones(1000))
        a = T.dropout(x, 0.3, "train", np.random.default_rng(9)).data
        b = T.dropout(x, 0.3, "train", np.random.default_rng(9)).data
        np.testing.assert_array_equal(a, b)


class TestBackward:
    def test_sum_gradient_is_ones(self):
        x = Tensor(np.random.default_rng(0).standard_normal((3, 4, 2)),
                   requires_grad=True)
        T.tensor_sum(x).backward()
        np.testing.assert_array_equal(x.grad, np.ones((3, 4, 2)))

    def test_product_rule(self):
        w = Tensor([3.0], requires_grad=True)
        x = Tensor([2.0])
        T.tensor_sum(T.mul(w, x)).backward()
        np.testing.assert_array_equal(w.grad, [2.0])

    def test_fanout_accumulates(self):
        x = Tensor([1.5], requires_grad=True)
        y = T.add(x, x)  # dy/dx = 2
        T.tensor_sum(y).backward()
        np.testing.assert_array_equal(x.grad, [2.0])

    def test_gradients_accumulate_across_passes(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        T.tensor_sum(x).backward()
        T.tensor_sum(x).backward()
        np.testing.assert_array_equal(x.grad, [2.0, 2.0])

    def test_non_scalar_loss_rejected(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with pytest.raises(GraphError):
            T.add(x, x).backward()

    def test_no_grad_for_frozen_leaves(self):
        x = Tensor([1.0], requires_grad=True)
        frozen = Tensor([2.0], requires_grad=False)
        T.tensor_sum(T.mul(x, frozen)).backward()
        assert frozen.grad is None
        np.testing.assert_array_equal(x.grad, [2.0])


class TestLosses:
    def test_cross_entropy_uniform_logits(self):
        logits = Tensor(np.zeros((2, 4)), requires_grad=True)
        loss = T.cross_entropy(logits, np.array([0, 3]))
        assert abs(float(loss.data) - np.log(4.0)) < 1e-12

    def test_cross_entropy_gradient_is_prob_minus_onehot(self):
        rng = np.random.default_rng(6)
        raw = rng.standard_normal((3, 5))
        logits = Tensor(raw, requires_grad=True)
        labels = np.array([1, 0, 4])
        T.cross_entropy(logits, labels).backward()
        e = np.exp(raw - raw.max(axis=1, keepdims=True))
        probs = e / e.sum(axis=1, keepdims=True)
        probs[np.arange(3), labels] -= 1.0
        np.testing.assert_allclose(logits.grad, probs / 3.0, rtol=1e-12)

    def test_mse(self):
        pred = Tensor([[1.0], [3.0]], requires_grad=True)
        loss = T.mse_loss(pred, np.array([[0.0], [1.0]]))
        assert abs(float(loss.data) - 2.5) < 1e-12
        loss.backward()
        np.testing.assert_allclose(pred.grad, [[1.0], [2.0]], rtol=1e-12)


class TestDeterminism:
    def test_identical_seeds_identical_outputs(self):
        def run():
            rng = np.random.default_rng(123)
            x = Tensor(rng.standard_normal((4, 8)))
            h = T.dropout(T.gelu(x), 0.2, "train", rng)
            return T.softmax(h).data

        np.testing.assert_array_equal(run(), run())
