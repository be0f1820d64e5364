"""Item similarity, sequence-fusion and group-prototype attention.

Shapes: ``(batch, T, D)`` for sequences, ``(batch, D)`` for targets, ``(N, D)`` for
the group prototypes shared by both domains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from man_rec.constants import MASK_FILL_VALUE
from man_rec.network.layers import Projections, attend, make_mlp, make_projections
from man_rec.network.parameters import ParameterStore
from man_rec.numerics.functional import DenseLayer, masked_softmax, mlp_apply
from man_rec.numerics.tensor import (
    Tensor,
    broadcast_to,
    concat,
    masked_fill,
    softmax,
    stop_gradient,
)


@dataclass(frozen=True)
class ItemSimilarityParams:
    mlp: list[DenseLayer]


@dataclass(frozen=True)
class SequenceFusionParams:
    projections: Projections
    mlp: list[DenseLayer]


@dataclass(frozen=True)
class GroupPrototypeParams:
    # Soft assignment of the T positions to the N groups.
    pool: Tensor
    pool_mlp: list[DenseLayer]
    projections: Projections
    mlp: list[DenseLayer]


def make_item_similarity(
    store: ParameterStore, prefix: str, dim: int, hidden: list[int]
) -> ItemSimilarityParams:
    return ItemSimilarityParams(make_mlp(store, f"{prefix}.mlp", (2 * dim, *hidden, 1)))


def make_sequence_fusion(
    store: ParameterStore, prefix: str, dim: int
) -> SequenceFusionParams:
    return SequenceFusionParams(
        projections=make_projections(store, prefix, dim),
        mlp=make_mlp(store, f"{prefix}.mlp", (dim, dim, dim)),
    )


def make_group_prototype(
    store: ParameterStore,
    prefix: str,
    dim: int,
    n_groups: int,
    max_len: int,
    hidden: list[int],
) -> GroupPrototypeParams:
    return GroupPrototypeParams(
        pool=store.add(f"{prefix}.pool", (n_groups, max_len)),
        pool_mlp=make_mlp(store, f"{prefix}.pool_mlp", (dim, *hidden, 1)),
        projections=make_projections(store, prefix, dim),
        mlp=make_mlp(store, f"{prefix}.mlp", (dim, dim, dim)),
    )


def _real_rows(mask: npt.ArrayLike) -> npt.NDArray[np.bool_]:
    return np.asarray(mask, dtype=bool)[..., None]


def item_similarity_scores(
    target_global: Tensor,
    local: Tensor,
    global_: Tensor,
    mask: npt.ArrayLike,
    params: ItemSimilarityParams,
) -> Tensor:
    """Score every history position against the target: ``(batch, T, 1)``.

    The target is the global-table embedding. Padded positions score
    ``MASK_FILL_VALUE``.
    """
    batch, length, dim = local.shape
    target = broadcast_to(target_global.reshape(batch, 1, dim), (batch, length, dim))
    scores = mlp_apply(concat([target, local + global_], axis=-1), params.mlp)
    return masked_fill(scores, _real_rows(mask), MASK_FILL_VALUE)


def item_similarity_weight(
    scores: Tensor, local: Tensor, global_: Tensor, mask: npt.ArrayLike
) -> Tensor:
    """Scale row ``t`` of ``local + global_`` by the softmax of the scores over time."""
    weights = masked_softmax(scores, _real_rows(mask), axis=-2)
    return weights * (local + global_)


def sequence_fusion(
    local: Tensor,
    global_: Tensor,
    mask: npt.ArrayLike,
    params: SequenceFusionParams,
    *,
    stop: bool = True,
) -> Tensor:
    """``MLP(CA(local, global_) + local)``: local positions query the global sequence.

    With ``stop`` no gradient flows back into either encoder output.
    """
    if stop:
        local, global_ = stop_gradient(local), stop_gradient(global_)
    fused = attend(local, global_, params.projections, mask)
    return mlp_apply(fused + local, params.mlp)


def group_pool(
    local: Tensor,
    mask: npt.ArrayLike,
    params: GroupPrototypeParams,
    *,
    stop: bool = True,
) -> Tensor:
    """Relevance of each group to the sequence, ``(batch, N, 1)``.

    Padded rows are zeroed before the soft assignment pools them.
    """
    if stop:
        local = stop_gradient(local)
    rows = local * _real_rows(mask).astype(np.float64)
    return mlp_apply(params.pool @ rows, params.pool_mlp)


def group_aggregate(
    prototypes: Tensor,
    local: Tensor,
    mask: npt.ArrayLike,
    params: GroupPrototypeParams,
    *,
    stop: bool = True,
) -> Tensor:
    """Prototypes attend over the real positions of the sequence: ``(batch, N, D)``.

    A history without real positions aggregates to zero.
    """
    if stop:
        local = stop_gradient(local)
    nonempty = np.asarray(mask, dtype=bool).any(axis=-1)[:, None, None]
    aggregated = mlp_apply(
        attend(prototypes, local, params.projections, mask), params.mlp
    )
    return aggregated * nonempty.astype(np.float64)


def group_weight(relevance: Tensor, aggregated: Tensor) -> Tensor:
    """Scale prototype row ``k`` by ``softmax(relevance)_k``."""
    return softmax(relevance, axis=-2) * aggregated


def disentangle_loss(prototypes: Tensor, lambda_g: float) -> Tensor:
    """``-lambda_g`` times the summed squared distance over unordered prototype pairs.

    Uses ``sum_{i<j} |G_i - G_j|^2 = N sum_i |G_i|^2 - |sum_i G_i|^2``.
    """
    if lambda_g < 0:
        raise ValueError(f"lambda_g must be non-negative, got {lambda_g}.")
    n = prototypes.shape[0]
    total = prototypes.sum(axis=0)
    spread = (prototypes * prototypes).sum() * float(n) - (total * total).sum()
    return spread * -lambda_g
