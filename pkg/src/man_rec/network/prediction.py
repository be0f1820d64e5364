from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from man_rec.models.config import Domain
from man_rec.network.parameters import ParameterStore
from man_rec.numerics.functional import DenseLayer, binary_cross_entropy, mlp_apply
from man_rec.numerics.tensor import Tensor, as_tensor, concat, sigmoid


@dataclass(frozen=True)
class PredictionInputs:
    """Pooled ``(batch, D)`` representations; a disabled component stays None."""

    similarity: Tensor | None = None
    fusion: Tensor | None = None
    group: Tensor | None = None
    local: Tensor | None = None
    global_: Tensor | None = None
    target_local: Tensor | None = None
    target_global: Tensor | None = None

    @property
    def local_features(self) -> list[Tensor]:
        parts = (
            self.similarity,
            self.fusion,
            self.group,
            self.local,
            self.target_local,
        )
        return [part for part in parts if part is not None]

    @property
    def global_features(self) -> list[Tensor]:
        parts = (self.global_, self.target_global)
        return [part for part in parts if part is not None]


def pool_sequence(x: Tensor, mask: npt.ArrayLike, *, mean: bool = False) -> Tensor:
    """Sum (or average) ``(batch, T, D)`` over the real positions."""
    valid = np.asarray(mask, dtype=np.float64)[..., None]
    pooled = (x * valid).sum(axis=-2)
    if not mean:
        return pooled
    return pooled / np.maximum(valid.sum(axis=-2), 1.0)


def pool_groups(x: Tensor, *, mean: bool = False) -> Tensor:
    """Sum (or average) ``(batch, N, D)`` over the groups."""
    return x.mean(axis=-2) if mean else x.sum(axis=-2)


def pool_representations(
    mask: npt.ArrayLike,
    *,
    similarity: Tensor | None = None,
    fusion: Tensor | None = None,
    group: Tensor | None = None,
    local: Tensor | None = None,
    global_: Tensor | None = None,
    target_local: Tensor | None = None,
    target_global: Tensor | None = None,
    mean: bool = False,
) -> PredictionInputs:
    def over_time(x: Tensor | None) -> Tensor | None:
        return None if x is None else pool_sequence(x, mask, mean=mean)

    return PredictionInputs(
        similarity=over_time(similarity),
        fusion=over_time(fusion),
        group=None if group is None else pool_groups(group, mean=mean),
        local=over_time(local),
        global_=over_time(global_),
        target_local=target_local,
        target_global=target_global,
    )


def head_logit(features: Sequence[Tensor], head: Sequence[DenseLayer]) -> Tensor:
    """Concatenate ``(batch, *)`` features and run the head down to ``(batch,)``."""
    out = mlp_apply(concat(list(features), axis=-1), head)
    return out.reshape(out.shape[0])


def predict(
    inputs: PredictionInputs,
    local_head: Sequence[DenseLayer] | None,
    global_head: Sequence[DenseLayer] | None,
) -> Tensor:
    """``sigmoid(local logit + global logit)``, either head may be absent."""
    logit: Tensor | None = None
    if local_head is not None:
        logit = head_logit(inputs.local_features, local_head)
    if global_head is not None:
        global_logit = head_logit(inputs.global_features, global_head)
        logit = global_logit if logit is None else logit + global_logit
    if logit is None:
        raise ValueError("At least one prediction head is needed.")
    return sigmoid(logit)


def domain_loss(predictions: Tensor, labels: npt.ArrayLike) -> Tensor:
    return binary_cross_entropy(predictions, labels)


@dataclass(frozen=True)
class LossBreakdown:
    total: Tensor
    loss_a: float | None
    loss_b: float | None
    disentangle: float
    reg_a: float | None
    reg_b: float | None

    def as_dict(self) -> dict[str, float]:
        values: dict[str, float | None] = {
            "total": self.total.item(),
            "loss_A": self.loss_a,
            "loss_B": self.loss_b,
            "disentangle": self.disentangle,
            "reg_A": self.reg_a,
            "reg_B": self.reg_b,
        }
        return {key: value for key, value in values.items() if value is not None}


def total_loss(
    loss_a: Tensor,
    loss_b: Tensor,
    store: ParameterStore,
    lambda_a: float,
    lambda_b: float,
    disentangle: Tensor | float = 0.0,
) -> LossBreakdown:
    """``L_A + L_B + lambda_A reg_A + lambda_B reg_B + L_g``.

    ``reg_d`` is the squared norm of the domain's parameters plus half of the shared
    ones, so shared parameters are regularized once overall.
    """
    reg_a = store.regularization(Domain.A)
    reg_b = store.regularization(Domain.B)
    l_g = as_tensor(disentangle)
    total = loss_a + loss_b + reg_a * lambda_a + reg_b * lambda_b + l_g
    return LossBreakdown(
        total=total,
        loss_a=loss_a.item(),
        loss_b=loss_b.item(),
        disentangle=l_g.item(),
        reg_a=reg_a.item(),
        reg_b=reg_b.item(),
    )


def single_domain_loss(
    domain: Domain,
    loss: Tensor,
    store: ParameterStore,
    lambda_d: float,
    disentangle: Tensor | float = 0.0,
) -> LossBreakdown:
    """``L_d + lambda_d reg_d + L_g``; nothing owned by the other domain is touched."""
    reg = store.regularization(domain)
    l_g = as_tensor(disentangle)
    total = loss + reg * lambda_d + l_g
    is_a = domain is Domain.A
    return LossBreakdown(
        total=total,
        loss_a=loss.item() if is_a else None,
        loss_b=None if is_a else loss.item(),
        disentangle=l_g.item(),
        reg_a=reg.item() if is_a else None,
        reg_b=None if is_a else reg.item(),
    )
