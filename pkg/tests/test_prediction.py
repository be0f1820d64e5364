import numpy as np
import pytest

from man_rec.models.config import Domain
from man_rec.network.layers import make_mlp
from man_rec.network.parameters import ParameterStore
from man_rec.network.prediction import (
    PredictionInputs,
    pool_groups,
    pool_representations,
    pool_sequence,
    predict,
    single_domain_loss,
    total_loss,
)
from man_rec.numerics.functional import DenseLayer
from man_rec.numerics.tensor import Tensor, backward


def _constant_head(
    store: ParameterStore, prefix: str, width: int, logit: float
) -> list[DenseLayer]:
    head = make_mlp(store, prefix, (width, 1))
    head[0].weight.data[...] = 0.0
    head[0].bias.data[...] = logit
    return head


def test_pooling_sums_real_rows(rng: np.random.Generator) -> None:
    r = rng.normal(size=3)
    x = np.stack([rng.normal(size=3), r, r])[None]
    np.testing.assert_allclose(
        pool_sequence(Tensor(x), [[False, True, False]]).data[0], r
    )
    np.testing.assert_allclose(
        pool_sequence(Tensor(x), [[False, True, True]]).data[0], 2 * r
    )
    mean = pool_sequence(Tensor(x), [[False, True, True]], mean=True).data[0]
    np.testing.assert_allclose(mean, r)


def test_mean_pooling_of_an_empty_history_is_zero() -> None:
    out = pool_sequence(Tensor(np.ones((1, 2, 3))), [[False, False]], mean=True)
    np.testing.assert_array_equal(out.data, np.zeros((1, 3)))


def test_group_pooling() -> None:
    x = Tensor(np.arange(12.0).reshape(1, 3, 4))
    np.testing.assert_allclose(pool_groups(x).data, [[12.0, 15.0, 18.0, 21.0]])
    np.testing.assert_allclose(pool_groups(x, mean=True).data, [[4.0, 5.0, 6.0, 7.0]])


def test_pool_representations_keeps_disabled_parts_empty(
    rng: np.random.Generator,
) -> None:
    local = Tensor(rng.normal(size=(2, 3, 4)))
    target = Tensor(rng.normal(size=(2, 4)))
    mask = np.ones((2, 3), dtype=bool)
    inputs = pool_representations(mask, local=local, target_local=target)
    assert inputs.similarity is None and inputs.group is None
    assert [part.shape for part in inputs.local_features] == [(2, 4), (2, 4)]
    assert inputs.global_features == []


def test_zero_logits_predict_one_half() -> None:
    store = ParameterStore()
    ones = Tensor(np.ones((3, 2)))
    inputs = PredictionInputs(local=ones, global_=ones)
    local_head = _constant_head(store, "A.head.local", 2, 0.0)
    global_head = _constant_head(store, "shared.head.global", 2, 0.0)
    np.testing.assert_allclose(predict(inputs, local_head, global_head).data, [0.5] * 3)


def test_local_and_global_logits_add() -> None:
    store = ParameterStore()
    ones = Tensor(np.ones((1, 2)))
    inputs = PredictionInputs(local=ones, global_=ones)
    local_head = _constant_head(store, "A.head.local", 2, 3.0)
    global_head = _constant_head(store, "shared.head.global", 2, -3.0)
    assert predict(inputs, local_head, global_head).item() == pytest.approx(0.5)
    local_only = predict(inputs, local_head, None).item()
    assert local_only == pytest.approx(1 / (1 + np.exp(-3)))
    with pytest.raises(ValueError):
        predict(inputs, None, None)


def test_head_concatenates_features_in_order() -> None:
    store = ParameterStore()
    head = make_mlp(store, "A.head.local", (4, 1))
    head[0].weight.data[...] = np.array([[1.0], [2.0], [3.0], [4.0]])
    inputs = PredictionInputs(
        similarity=Tensor([[1.0, 0.0]]), target_local=Tensor([[0.0, 1.0]])
    )
    expected = 1 / (1 + np.exp(-5.0))
    assert predict(inputs, head, None).item() == pytest.approx(expected)


def _store() -> ParameterStore:
    store = ParameterStore(seed=6)
    store.add("A.x", (3,))
    store.add("B.x", (2, 2))
    store.add("shared.x", (4,))
    return store


def test_total_loss_without_regularization() -> None:
    store = _store()
    breakdown = total_loss(Tensor(0.4), Tensor(0.9), store, 0.0, 0.0)
    assert breakdown.total.item() == pytest.approx(1.3)
    assert breakdown.disentangle == 0.0


def test_total_loss_matches_explicit_sum() -> None:
    store = _store()
    a, b, shared = (store[name].data for name in ("A.x", "B.x", "shared.x"))
    breakdown = total_loss(Tensor(0.4), Tensor(0.9), store, 0.1, 0.2, disentangle=-0.5)
    shared_norm = np.sum(shared**2)
    reg_a = np.sum(a**2) + 0.5 * shared_norm
    reg_b = np.sum(b**2) + 0.5 * shared_norm
    assert breakdown.reg_a == pytest.approx(reg_a)
    assert breakdown.reg_b == pytest.approx(reg_b)
    expected = 0.4 + 0.9 + 0.1 * reg_a + 0.2 * reg_b - 0.5
    assert breakdown.total.item() == pytest.approx(expected)
    assert set(breakdown.as_dict()) == {
        "total",
        "loss_A",
        "loss_B",
        "disentangle",
        "reg_A",
        "reg_B",
    }


def test_single_domain_loss_leaves_the_other_domain_alone() -> None:
    store = _store()
    breakdown = single_domain_loss(Domain.B, Tensor(0.7), store, 0.5)
    backward(breakdown.total)
    assert store["A.x"].grad is None
    np.testing.assert_allclose(store["B.x"].grad, 0.5 * 2 * store["B.x"].data)
    np.testing.assert_allclose(store["shared.x"].grad, 0.5 * store["shared.x"].data)
    assert breakdown.loss_a is None and breakdown.loss_b == pytest.approx(0.7)
    assert set(breakdown.as_dict()) == {"total", "loss_B", "disentangle", "reg_B"}
