from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from enum import Enum
from typing import Literal, NamedTuple

import numpy as np
import numpy.typing as npt

from man_rec.constants import MASK_FILL_VALUE, PROBABILITY_EPSILON
from man_rec.errors import EmptyAttentionError, ShapeError
from man_rec.numerics.tensor import (
    Tensor,
    as_tensor,
    clip,
    log,
    masked_fill,
    relu,
    sigmoid,
    softmax,
    sqrt,
    tanh,
)


class Activation(str, Enum):
    IDENTITY = "identity"
    RELU = "relu"
    TANH = "tanh"
    SIGMOID = "sigmoid"


class DenseLayer(NamedTuple):
    weight: Tensor
    bias: Tensor
    activation: Activation = Activation.RELU


def activate(x: Tensor, activation: Activation) -> Tensor:
    if activation is Activation.RELU:
        return relu(x)
    if activation is Activation.TANH:
        return tanh(x)
    if activation is Activation.SIGMOID:
        return sigmoid(x)
    return x


def mlp_apply(x: Tensor, layers: Sequence[DenseLayer]) -> Tensor:
    """Apply affine layers in order, each followed by its own activation."""
    for layer in layers:
        x = activate(x @ layer.weight + layer.bias, layer.activation)
    return x


def masked_softmax(scores: Tensor, valid: npt.ArrayLike, axis: int = -1) -> Tensor:
    """Softmax over the valid entries only.

    Invalid entries get weight exactly zero, and a slice with no valid entry comes
    out as all zeros rather than uniform.
    """
    keep = np.broadcast_to(np.asarray(valid, dtype=bool), scores.shape)
    weights = softmax(masked_fill(scores, keep, MASK_FILL_VALUE), axis=axis)
    return weights * keep.astype(np.float64)


def scaled_dot_attention(
    query: Tensor,
    key: Tensor,
    value: Tensor,
    mask: npt.ArrayLike | None = None,
    *,
    causal: bool = False,
    on_empty: Literal["raise", "zero"] = "raise",
) -> Tensor:
    """softmax(Q K^T / sqrt(D)) V over the last two axes.

    :param mask: Booleans over key positions (True = real), broadcastable against the
        leading axes of ``key``.
    :param causal: Restrict query ``t`` to keys ``<= t``; needs as many queries as keys.
    :param on_empty: What to do when a query has no valid key: raise, or output zeros.
    """
    dim = query.shape[-1]
    if key.shape[-1] != dim or value.shape[-2] != key.shape[-2]:
        raise ShapeError(
            f"Attention shapes do not line up: "
            f"Q {query.shape}, K {key.shape}, V {value.shape}."
        )
    scores = (query @ key.mT) / math.sqrt(dim)
    if mask is None and not causal:
        return softmax(scores, axis=-1) @ value

    valid = np.ones(scores.shape, dtype=bool)
    if mask is not None:
        key_mask = np.asarray(mask, dtype=bool)
        if key_mask.shape[-1] != key.shape[-2]:
            raise ShapeError(
                f"Mask of shape {key_mask.shape} does not match {key.shape[-2]} keys."
            )
        valid = valid & key_mask[..., None, :]
    if causal:
        queries, keys = scores.shape[-2:]
        if queries != keys:
            raise ShapeError(
                "Causal attention needs as many queries as keys, "
                f"got {queries} and {keys}."
            )
        valid = valid & np.tril(np.ones((queries, keys), dtype=bool))
    if on_empty == "raise" and not valid.any(axis=-1).all():
        raise EmptyAttentionError("Every key is masked for at least one query.")
    return masked_softmax(scores, valid) @ value


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-8) -> Tensor:
    """Normalize over the feature (last) axis."""
    centered = x - x.mean(axis=-1, keepdims=True)
    variance = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / sqrt(variance + eps) * gain + bias


def binary_cross_entropy(
    probabilities: Tensor,
    labels: npt.ArrayLike,
    eps: float = PROBABILITY_EPSILON,
) -> Tensor:
    """Mean negative log-likelihood of 0/1 labels.

    Probabilities are clamped to ``[eps, 1 - eps]``.
    """
    if probabilities.size == 0:
        raise ShapeError("Cannot compute a loss over an empty batch.")
    y = np.asarray(labels, dtype=np.float64).reshape(probabilities.shape)
    p = clip(probabilities, eps, 1.0 - eps)
    likelihood = log(p) * y + log(1.0 - p) * (1.0 - y)
    return -likelihood.mean()


def sum_of_squares(tensors: Iterable[Tensor]) -> Tensor:
    total = as_tensor(0.0)
    for tensor in tensors:
        total = total + (tensor * tensor).sum()
    return total
