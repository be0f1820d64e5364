import numpy as np

from man_rec.network.parameters import ParameterStore
from man_rec.numerics.functional import binary_cross_entropy
from man_rec.numerics.gradcheck import finite_difference_check, parameter_errors
from man_rec.numerics.tensor import Tensor, log, softmax


def test_half_squared_norm_is_exact() -> None:
    store = ParameterStore(seed=5)
    theta = store.add("shared.theta", (3, 2))
    error = finite_difference_check(lambda: (theta * theta).sum() * 0.5, store)
    assert error < 1e-9


def test_softmax_cross_entropy() -> None:
    logits = Tensor([0.2, -1.3, 0.7], requires_grad=True)
    target = np.array([0.0, 1.0, 0.0])
    error = finite_difference_check(
        lambda: -(log(softmax(logits)) * target).sum(), {"logits": logits}
    )
    assert error < 1e-6
    np.testing.assert_allclose(logits.grad, softmax(logits).data - target)


def test_errors_are_reported_per_parameter() -> None:
    store = ParameterStore(seed=1)
    weight = store.add("A.weight", (2, 1))
    bias = store.add("B.bias", (1,), "zeros")
    x = Tensor([[0.5, -1.0], [2.0, 0.3]])

    def loss() -> Tensor:
        return binary_cross_entropy((x @ weight + bias).sigmoid(), [[1], [0]])

    errors = parameter_errors(loss, store)
    assert set(errors) == {"A.weight", "B.bias"}
    assert max(errors.values()) < 1e-6
