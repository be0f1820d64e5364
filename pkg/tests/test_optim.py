import numpy as np
import pytest

from man_rec.errors import NonFiniteError
from man_rec.network.parameters import ParameterStore
from man_rec.training.optim import Adam


def _store() -> ParameterStore:
    store = ParameterStore(seed=0)
    store.add("A.x", (3,), "ones")
    store.add("B.x", (2,), "ones")
    store.add("shared.embedding.items", (3, 2), padding_row=True)
    return store


def test_first_step_moves_by_the_learning_rate() -> None:
    store = _store()
    store["A.x"].grad = np.array([2.0, -0.5, 0.0])
    optimizer = Adam(store, learning_rate=0.1)
    optimizer.step()
    # Bias correction makes the first step lr * g / (|g| + eps).
    np.testing.assert_allclose(store["A.x"].data, [0.9, 1.1, 1.0], atol=1e-7)
    assert optimizer.state.step == 1


def test_second_step_matches_the_update_rule() -> None:
    store = _store()
    optimizer = Adam(store, learning_rate=0.01, beta1=0.9, beta2=0.999, eps=1e-8)
    grads = [np.array([1.0, 2.0, 3.0]), np.array([-1.0, 0.5, 3.0])]
    m = v = np.zeros(3)
    expected = np.ones(3)
    for t, grad in enumerate(grads, start=1):
        store["A.x"].grad = grad
        optimizer.step()
        m = 0.9 * m + 0.1 * grad
        v = 0.999 * v + 0.001 * grad**2
        m_hat, v_hat = m / (1 - 0.9**t), v / (1 - 0.999**t)
        expected = expected - 0.01 * m_hat / (np.sqrt(v_hat) + 1e-8)
    np.testing.assert_allclose(store["A.x"].data, expected)


def test_parameters_without_gradients_are_skipped() -> None:
    store = _store()
    store["A.x"].grad = np.ones(3)
    optimizer = Adam(store)
    optimizer.step()
    np.testing.assert_array_equal(store["B.x"].data, [1.0, 1.0])
    assert "B.x" not in optimizer.state.m and "B.x" not in optimizer.state.v


def test_padding_row_is_zeroed_after_the_step() -> None:
    store = _store()
    table = store["shared.embedding.items"]
    table.grad = np.ones((3, 2))
    Adam(store).step()
    np.testing.assert_array_equal(table.data[0], [0.0, 0.0])
    assert np.all(table.data[1:] != 0)


def test_non_finite_gradients_stop_the_step() -> None:
    store = _store()
    store["A.x"].grad = np.ones(3)
    store["B.x"].grad = np.array([1.0, np.nan])
    optimizer = Adam(store)
    with pytest.raises(NonFiniteError, match="B.x"):
        optimizer.step()
    np.testing.assert_array_equal(store["A.x"].data, np.ones(3))
    assert optimizer.state.step == 0
