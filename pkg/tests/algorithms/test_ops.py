"""Tests for differentiable operations."""

import math

import numpy as np
import pytest

from src.algorithms import ops
from src.algorithms.gradcheck import grad_check
from src.algorithms.tensor import Tensor
from src.utils.validators import ConfigurationError, ContractError, DimensionError


def param(rng: np.random.Generator, *shape: int) -> Tensor:
    return Tensor(rng.normal(size=shape), requires_grad=True)


class TestMatmul:
    """Matrix product."""

    def test_identity(self, rng: np.random.Generator) -> None:
        m = Tensor(rng.normal(size=(2, 2)))
        np.testing.assert_array_equal(ops.matmul(Tensor(np.eye(2)), m).data, m.data)

    def test_hand_example(self) -> None:
        out = ops.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
        np.testing.assert_array_equal(out.data, [[3.0], [7.0]])

    def test_mismatch_names_both_shapes(self) -> None:
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            ops.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


class TestConv1dSame:
    """Same-padded 1-D convolution."""

    def test_width_one_identity(self, rng: np.random.Generator) -> None:
        x = Tensor(rng.normal(size=(4, 3)))
        out = ops.conv1d_same(x, Tensor(np.eye(3)), 1)
        np.testing.assert_allclose(out.data, x.data)

    def test_window_sum_with_zero_padding(self) -> None:
        out = ops.conv1d_same(Tensor(np.ones((5, 1))), Tensor(np.ones((3, 1))), 3)
        np.testing.assert_array_equal(out.data.ravel(), [2.0, 3.0, 3.0, 3.0, 2.0])

    @pytest.mark.parametrize("width", [3, 5, 9, 15, 19, 25])
    def test_output_length_matches_input(self, width: int, rng: np.random.Generator) -> None:
        x = Tensor(rng.normal(size=(7, 2)))
        w = Tensor(rng.normal(size=(width * 2, 4)))
        assert ops.conv1d_same(x, w, width).shape == (7, 4)

    def test_window_order(self) -> None:
        # filter picks the right neighbour
        x = Tensor(np.arange(1.0, 5.0).reshape(4, 1))
        w = Tensor(np.array([[0.0], [0.0], [1.0]]))
        np.testing.assert_array_equal(ops.conv1d_same(x, w, 3).data.ravel(), [2.0, 3.0, 4.0, 0.0])

    def test_even_width_rejected(self) -> None:
        with pytest.raises(ConfigurationError):
            ops.conv1d_same(Tensor(np.ones((3, 1))), Tensor(np.ones((2, 1))), 2)

    def test_filter_height_checked(self) -> None:
        with pytest.raises(DimensionError):
            ops.conv1d_same(Tensor(np.ones((3, 2))), Tensor(np.ones((3, 1))), 3)


class TestSoftmaxRows:
    """Row-wise softmax."""

    def test_uniform_row(self) -> None:
        out = ops.softmax_rows(Tensor(np.full((1, 4), 2.0)))
        np.testing.assert_allclose(out.data, np.full((1, 4), 0.25))

    def test_closed_form(self) -> None:
        out = ops.softmax_rows(Tensor([[0.0, math.log(3.0)]]))
        np.testing.assert_allclose(out.data, [[0.25, 0.75]], atol=1e-15)

    def test_shift_invariance(self, rng: np.random.Generator) -> None:
        x = rng.normal(size=(3, 5))
        a = ops.softmax_rows(Tensor(x)).data
        b = ops.softmax_rows(Tensor(x + 17.0)).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_rows_sum_to_one_for_large_logits(self, rng: np.random.Generator) -> None:
        out = ops.softmax_rows(Tensor(rng.normal(scale=300.0, size=(6, 8)))).data
        assert np.all(out >= 0)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)

    def test_mask_gives_zero_mass(self, rng: np.random.Generator) -> None:
        mask = np.array([True, True, False, True, False])
        out = ops.softmax_rows(Tensor(rng.normal(size=(3, 5))), mask[None, :]).data
        assert np.all(out[:, ~mask] == 0.0)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)

    def test_fully_masked_row_rejected(self) -> None:
        with pytest.raises(ContractError):
            ops.softmax_rows(Tensor(np.zeros((1, 3))), np.zeros((1, 3), dtype=bool))


class TestElementwise:
    """Activations, concatenation and reductions."""

    def test_sigmoid_of_zero(self) -> None:
        assert ops.sigmoid(Tensor([[0.0]])).item() == 0.5

    def test_relu_of_negative(self) -> None:
        np.testing.assert_array_equal(ops.relu(Tensor([[-1.0, -3.5]])).data, [[0.0, 0.0]])

    def test_concat_cols_shape(self) -> None:
        out = ops.concat_cols([Tensor(np.zeros((3, 2))), Tensor(np.ones((3, 4)))])
        assert out.shape == (3, 6)

    def test_concat_rows_shape(self) -> None:
        out = ops.concat_rows([Tensor(np.zeros((2, 3))), Tensor(np.ones((1, 3)))])
        assert out.shape == (3, 3)

    def test_concat_rejects_mismatch(self) -> None:
        with pytest.raises(DimensionError):
            ops.concat_cols([Tensor(np.zeros((3, 2))), Tensor(np.zeros((2, 2)))])

    def test_add_rejects_incompatible_shapes(self) -> None:
        with pytest.raises(DimensionError):
            ops.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))

    def test_mean_rows(self) -> None:
        out = ops.mean_rows(Tensor([[1.0, 2.0], [3.0, 6.0]]))
        np.testing.assert_array_equal(out.data, [[2.0, 4.0]])

    def test_segment_mean(self) -> None:
        x = Tensor([[1.0], [3.0], [10.0]])
        out = ops.segment_mean(x, np.array([0, 0, 1]), 2)
        np.testing.assert_array_equal(out.data, [[2.0], [10.0]])

    def test_segment_mean_rejects_empty_segment(self) -> None:
        with pytest.raises(ContractError):
            ops.segment_mean(Tensor([[1.0]]), np.array([0]), 2)

    def test_gather_rows_out_of_range(self) -> None:
        with pytest.raises(ContractError):
            ops.gather_rows(Tensor(np.zeros((3, 2))), np.array([0, 3]))

    def test_dropout_is_identity_at_eval(self, rng: np.random.Generator) -> None:
        x = Tensor(np.ones((4, 4)))
        assert ops.dropout(x, 0.4, rng, training=False) is x

    def test_dropout_scales_kept_entries(self, rng: np.random.Generator) -> None:
        out = ops.dropout(Tensor(np.ones((50, 50))), 0.5, rng, training=True).data
        assert set(np.unique(out)) <= {0.0, 2.0}

    def test_binary_cross_entropy_is_clamped(self) -> None:
        loss = ops.binary_cross_entropy(Tensor([[0.0], [1.0]]), np.array([[1.0], [0.0]]))
        assert math.isfinite(loss.item())
        assert loss.item() == pytest.approx(-2.0 * math.log(1e-12))


class TestGradients:
    """Analytic gradients against central differences on random inputs."""

    def test_matmul_add_tanh(self, rng: np.random.Generator) -> None:
        a, b, c = param(rng, 3, 4), param(rng, 4, 2), param(rng, 1, 2)
        f = lambda: ops.sum_all(ops.tanh(ops.add(ops.matmul(a, b), c)))  # noqa: E731
        assert grad_check(f, [a, b, c], samples_per_parameter=None) < 1e-6

    def test_sigmoid_mul_sub(self, rng: np.random.Generator) -> None:
        a, b = param(rng, 5, 3), param(rng, 5, 3)
        f = lambda: ops.sum_all(ops.mul(ops.sigmoid(a), ops.sub(a, b)))  # noqa: E731
        assert grad_check(f, [a, b], samples_per_parameter=None) < 1e-6

    def test_masked_softmax(self, rng: np.random.Generator) -> None:
        x, w = param(rng, 3, 6), param(rng, 6, 1)
        mask = np.array([True, False, True, True, False, True])
        f = lambda: ops.sum_all(ops.matmul(ops.softmax_rows(x, mask[None, :]), w))  # noqa: E731
        assert grad_check(f, [x, w], samples_per_parameter=None) < 1e-6

    def test_conv1d(self, rng: np.random.Generator) -> None:
        x, w = param(rng, 6, 2), param(rng, 6, 3)
        f = lambda: ops.sum_all(ops.tanh(ops.conv1d_same(x, w, 3)))  # noqa: E731
        assert grad_check(f, [x, w], samples_per_parameter=None) < 1e-6

    def test_concat_transpose_broadcast(self, rng: np.random.Generator) -> None:
        a, b, r = param(rng, 4, 2), param(rng, 4, 3), param(rng, 1, 5)
        joined = lambda: ops.add(ops.concat_cols([a, b]), ops.broadcast_rows(r, 4))  # noqa: E731
        f = lambda: ops.sum_all(ops.tanh(ops.transpose(joined())))  # noqa: E731
        assert grad_check(f, [a, b, r], samples_per_parameter=None) < 1e-6

    def test_gather_segment_mean_rows(self, rng: np.random.Generator) -> None:
        table = param(rng, 5, 3)
        indices = np.array([1, 4, 1, 2])
        segments = np.array([0, 0, 1, 1])

        def f() -> Tensor:
            pooled = ops.segment_mean(ops.gather_rows(table, indices), segments, 2)
            stacked = ops.concat_rows([pooled, ops.mean_rows(pooled)])
            return ops.sum_all(ops.tanh(stacked))

        assert grad_check(f, [table], samples_per_parameter=None) < 1e-6

    def test_binary_cross_entropy(self, rng: np.random.Generator) -> None:
        logits = param(rng, 4, 1)
        targets = np.array([[1.0], [0.0], [1.0], [0.0]])
        f = lambda: ops.binary_cross_entropy(ops.sigmoid(logits), targets)  # noqa: E731
        assert grad_check(f, [logits], samples_per_parameter=None) < 1e-6

    def test_relu_away_from_kink(self) -> None:
        x = Tensor([[0.5, -0.7, 1.3]], requires_grad=True)
        f = lambda: ops.sum_all(ops.mul(ops.relu(x), x))  # noqa: E731
        assert grad_check(f, [x], samples_per_parameter=None) < 1e-6
