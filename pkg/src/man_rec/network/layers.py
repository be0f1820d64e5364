"""Parameter groups shared by the network components."""

from __future__ import annotations

from collections.abc import Sequence
from typing import Literal, NamedTuple

import numpy as np
import numpy.typing as npt

from man_rec.network.parameters import ParameterStore
from man_rec.numerics.functional import (
    Activation,
    DenseLayer,
    layer_norm,
    scaled_dot_attention,
)
from man_rec.numerics.tensor import Tensor


def make_mlp(
    store: ParameterStore,
    prefix: str,
    sizes: Sequence[int],
    *,
    hidden: Activation = Activation.RELU,
    last: Activation = Activation.IDENTITY,
) -> list[DenseLayer]:
    """``sizes`` lists the input width followed by every layer's output width."""
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        activation = last if i == len(sizes) - 2 else hidden
        layers.append(
            DenseLayer(
                store.add(f"{prefix}.{i}.weight", (fan_in, fan_out)),
                store.add(f"{prefix}.{i}.bias", (fan_out,), "zeros"),
                activation,
            )
        )
    return layers


class LayerNorm(NamedTuple):
    gain: Tensor
    bias: Tensor

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias)


def make_layer_norm(store: ParameterStore, prefix: str, dim: int) -> LayerNorm:
    return LayerNorm(
        store.add(f"{prefix}.gain", (dim,), "ones"),
        store.add(f"{prefix}.bias", (dim,), "zeros"),
    )


class Projections(NamedTuple):
    query: Tensor
    key: Tensor
    value: Tensor
    output: Tensor | None = None


def make_projections(
    store: ParameterStore, prefix: str, dim: int, *, output: bool = False
) -> Projections:
    return Projections(
        store.add(f"{prefix}.query", (dim, dim)),
        store.add(f"{prefix}.key", (dim, dim)),
        store.add(f"{prefix}.value", (dim, dim)),
        store.add(f"{prefix}.output", (dim, dim)) if output else None,
    )


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, length, dim = x.shape
    return x.reshape(*lead, length, heads, dim // heads).transpose(
        *range(len(lead)), len(lead) + 1, len(lead), len(lead) + 2
    )


def _merge_heads(x: Tensor) -> Tensor:
    *lead, heads, length, dim = x.shape
    return x.transpose(
        *range(len(lead)), len(lead) + 1, len(lead), len(lead) + 2
    ).reshape(*lead, length, heads * dim)


def attend(
    queries: Tensor,
    keys: Tensor,
    projections: Projections,
    mask: npt.ArrayLike,
    *,
    heads: int = 1,
    causal: bool = False,
    on_empty: Literal["raise", "zero"] = "zero",
) -> Tensor:
    """Projected (multi-head) attention of ``queries`` over ``keys``.

    ``mask`` marks the real key positions, shape ``keys.shape[:-1]``.
    """
    q = queries @ projections.query
    k = keys @ projections.key
    v = keys @ projections.value
    if heads == 1:
        out = scaled_dot_attention(q, k, v, mask, causal=causal, on_empty=on_empty)
    else:
        key_mask = np.asarray(mask, dtype=bool)[..., None, :]
        out = _merge_heads(
            scaled_dot_attention(
                _split_heads(q, heads),
                _split_heads(k, heads),
                _split_heads(v, heads),
                key_mask,
                causal=causal,
                on_empty=on_empty,
            )
        )
    if projections.output is not None:
        out = out @ projections.output
    return out
