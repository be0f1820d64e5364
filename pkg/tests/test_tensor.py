import math

import numpy as np
import pytest

from man_rec.errors import ShapeError
from man_rec.numerics.tensor import (
    Tensor,
    backward,
    concat,
    softmax,
    stop_gradient,
    take_rows,
)


def test_matmul_identity_and_hand_arithmetic() -> None:
    identity = Tensor([[1.0, 0.0], [0.0, 1.0]])
    column = Tensor([[3.0], [4.0]])
    np.testing.assert_array_equal((identity @ column).data, [[3.0], [4.0]])
    np.testing.assert_array_equal((Tensor([[1.0, 2.0]]) @ column).data, [[11.0]])


def test_matmul_shape_mismatch_names_both_shapes() -> None:
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


@pytest.mark.parametrize(
    "logits, expected",
    [
        ([0.0, 0.0, 0.0], [1 / 3, 1 / 3, 1 / 3]),
        ([math.log(1), math.log(2), math.log(3)], [1 / 6, 2 / 6, 3 / 6]),
        ([1000.0, 0.0], [1.0, 0.0]),
    ],
)
def test_softmax(logits: list[float], expected: list[float]) -> None:
    out = softmax(Tensor(logits))
    assert np.all(np.isfinite(out.data))
    np.testing.assert_allclose(out.data, expected, atol=1e-12)
    assert out.data.sum() == pytest.approx(1.0)


def test_sum_gradient_is_ones() -> None:
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    backward(x.sum())
    assert x.grad is not None
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_stop_gradient_sends_zero_back() -> None:
    x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
    y = Tensor([0.5, 0.5, 2.0], requires_grad=True)
    backward((stop_gradient(x) * y).sum())
    assert x.grad is not None and y.grad is not None
    np.testing.assert_array_equal(x.grad, np.zeros(3))
    np.testing.assert_array_equal(y.grad, x.data)


def test_shared_node_gradients_accumulate() -> None:
    x = Tensor([2.0, 3.0], requires_grad=True)
    y = x * x + x
    backward(y.sum())
    assert x.grad is not None
    np.testing.assert_allclose(x.grad, 2 * x.data + 1)


def test_broadcast_gradient_is_summed_back() -> None:
    bias = Tensor([1.0, 2.0], requires_grad=True)
    x = Tensor(np.ones((4, 2)))
    backward((x + bias).sum())
    assert bias.grad is not None
    np.testing.assert_array_equal(bias.grad, [4.0, 4.0])


def test_backward_needs_a_scalar() -> None:
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ShapeError):
        backward(x * 2.0)


def test_take_rows_accumulates_repeated_rows() -> None:
    table = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
    rows = take_rows(table, [[0, 2, 2]])
    assert rows.shape == (1, 3, 2)
    backward(rows.sum())
    assert table.grad is not None
    np.testing.assert_array_equal(table.grad, [[1, 1], [0, 0], [2, 2]])


def test_take_rows_out_of_range() -> None:
    with pytest.raises(IndexError, match="3 rows"):
        take_rows(Tensor(np.zeros((3, 2))), [3])


def test_concat_splits_gradient() -> None:
    a = Tensor(np.ones((2, 1)), requires_grad=True)
    b = Tensor(np.ones((2, 2)), requires_grad=True)
    out = concat([a, b], axis=-1)
    backward((out * Tensor([[1.0, 2.0, 3.0]])).sum())
    assert a.grad is not None and b.grad is not None
    np.testing.assert_array_equal(a.grad, [[1.0], [1.0]])
    np.testing.assert_array_equal(b.grad, [[2.0, 3.0], [2.0, 3.0]])


def test_sigmoid_is_stable_at_extremes() -> None:
    out = Tensor([-1000.0, 0.0, 1000.0]).sigmoid()
    np.testing.assert_allclose(out.data, [0.0, 0.5, 1.0])


def test_item_needs_a_single_value() -> None:
    assert Tensor([[2.5]]).item() == 2.5
    with pytest.raises(ShapeError):
        Tensor([1.0, 2.0]).item()
