"""Tests for tensors, the tape and gradient accumulation."""

import numpy as np
import pytest

from src.algorithms import ops
from src.algorithms.tensor import Tape, Tensor, active_tape
from src.utils.validators import ContractError


class TestTensorBasics:
    """Construction and accessors."""

    def test_data_is_float64_copy(self) -> None:
        source = np.array([[1, 2], [3, 4]])
        tensor = Tensor(source)
        assert tensor.data.dtype == np.float64
        source[0, 0] = 99
        assert tensor.data[0, 0] == 1.0

    def test_shape_and_size(self) -> None:
        tensor = Tensor.zeros(3, 4)
        assert tensor.shape == (3, 4)
        assert tensor.size == 12

    def test_item_requires_single_value(self) -> None:
        assert Tensor([[2.5]]).item() == 2.5
        with pytest.raises(ContractError):
            Tensor([1.0, 2.0]).item()

    def test_numpy_returns_copy(self) -> None:
        tensor = Tensor([1.0, 2.0])
        values = tensor.numpy()
        values[0] = 7.0
        assert tensor.data[0] == 1.0

    def test_arithmetic_goes_through_ops(self) -> None:
        a = Tensor([[1.0, 2.0]])
        with pytest.raises(TypeError):
            a + a  # pylint: disable=pointless-statement
        with pytest.raises(TypeError):
            a @ a  # pylint: disable=pointless-statement


class TestTape:
    """Recording and backward replay."""

    def test_context_manager_activates_and_releases(self) -> None:
        assert active_tape() is None
        with Tape() as tape:
            assert active_tape() is tape
        assert active_tape() is None

    def test_only_differentiable_ops_are_recorded(self) -> None:
        p = Tensor([[1.0]], requires_grad=True)
        c = Tensor([[2.0]])
        with Tape() as tape:
            ops.add(c, c)
            ops.mul(p, c)
        assert len(tape) == 1

    def test_sum_gives_ones(self) -> None:
        p = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        with Tape() as tape:
            loss = ops.sum_all(p)
        tape.backward(loss)
        np.testing.assert_array_equal(p.grad, np.ones((2, 3)))

    def test_square_gives_twice_value(self) -> None:
        p = Tensor([[1.0, -2.0, 3.0]], requires_grad=True)
        with Tape() as tape:
            loss = ops.sum_all(ops.mul(p, p))
        tape.backward(loss)
        np.testing.assert_allclose(p.grad, 2.0 * p.data)

    def test_reuse_accumulates(self) -> None:
        p = Tensor([[1.0, 1.0]], requires_grad=True)
        with Tape() as tape:
            loss = ops.add(ops.sum_all(p), ops.sum_all(p))
        tape.backward(loss)
        np.testing.assert_array_equal(p.grad, [[2.0, 2.0]])

    def test_unused_parameter_gets_zero_gradient(self) -> None:
        used = Tensor([[1.0]], requires_grad=True)
        unused = Tensor([[5.0, 6.0]], requires_grad=True)
        with Tape() as tape:
            loss = ops.sum_all(used)
        tape.backward(loss, [used, unused])
        np.testing.assert_array_equal(unused.grad, np.zeros((1, 2)))

    def test_non_scalar_loss_rejected(self) -> None:
        p = Tensor([[1.0, 2.0]], requires_grad=True)
        with Tape() as tape:
            out = ops.scale(p, 2.0)
        with pytest.raises(ContractError):
            tape.backward(out)

    def test_matmul_gradient_is_b_transposed(self) -> None:
        a = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
        b = Tensor([[5.0], [6.0]], requires_grad=True)
        with Tape() as tape:
            loss = ops.sum_all(ops.matmul(a, b))
        tape.backward(loss)
        np.testing.assert_array_equal(a.grad, np.repeat(b.data.T, 2, axis=0))
        np.testing.assert_array_equal(b.grad, a.data.sum(axis=0, keepdims=True).T)
