"""Sequence encoders: a causal self-attention stack and a gated recurrent stack.

Both map ``(batch, T, D)`` to ``(batch, T, D)``. Position ``t`` of the output only
depends on inputs at positions ``<= t`` and padded positions come out as zero rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import numpy.typing as npt

from man_rec.models.config import Backbone, Domain, EncoderConfig
from man_rec.network.layers import (
    LayerNorm,
    Projections,
    attend,
    make_layer_norm,
    make_mlp,
    make_projections,
)
from man_rec.network.parameters import ParameterStore
from man_rec.numerics.functional import DenseLayer, mlp_apply
from man_rec.numerics.tensor import Tensor, sigmoid, stack, tanh


class SelfAttentionLayer(NamedTuple):
    attention: Projections
    norm1: LayerNorm
    ffn: list[DenseLayer]
    norm2: LayerNorm


class RecurrentLayer(NamedTuple):
    input_weight: Tensor
    hidden_weight: Tensor
    bias: Tensor


@dataclass(frozen=True)
class Encoder:
    config: EncoderConfig
    prefix: str
    layers: tuple[SelfAttentionLayer | RecurrentLayer, ...]

    def parameters(self) -> list[Tensor]:
        tensors: list[Tensor] = []
        for layer in self.layers:
            if isinstance(layer, SelfAttentionLayer):
                tensors.extend(t for t in layer.attention if t is not None)
                tensors.extend(layer.norm1)
                for dense in layer.ffn:
                    tensors.extend((dense.weight, dense.bias))
                tensors.extend(layer.norm2)
            else:
                tensors.extend(layer)
        return tensors

    def __call__(self, embedded: Tensor, mask: npt.ArrayLike) -> Tensor:
        return encode(embedded, mask, self)


def _self_attention_layer(
    store: ParameterStore, prefix: str, dim: int, hidden: int
) -> SelfAttentionLayer:
    return SelfAttentionLayer(
        attention=make_projections(store, f"{prefix}.attention", dim, output=True),
        norm1=make_layer_norm(store, f"{prefix}.norm1", dim),
        ffn=make_mlp(store, f"{prefix}.ffn", (dim, hidden, dim)),
        norm2=make_layer_norm(store, f"{prefix}.norm2", dim),
    )


def _recurrent_layer(store: ParameterStore, prefix: str, dim: int) -> RecurrentLayer:
    # Gate order along the last axis: update, reset, candidate.
    return RecurrentLayer(
        input_weight=store.add(f"{prefix}.input_weight", (dim, 3 * dim)),
        hidden_weight=store.add(f"{prefix}.hidden_weight", (dim, 3 * dim)),
        bias=store.add(f"{prefix}.bias", (3 * dim,), "zeros"),
    )


def make_encoder(
    store: ParameterStore, prefix: str, config: EncoderConfig, dim: int
) -> Encoder:
    layers: list[SelfAttentionLayer | RecurrentLayer] = []
    for i in range(config.layers):
        if config.backbone is Backbone.SELF_ATTENTION:
            layers.append(
                _self_attention_layer(store, f"{prefix}.{i}", dim, config.hidden or dim)
            )
        else:
            layers.append(_recurrent_layer(store, f"{prefix}.{i}", dim))
    return Encoder(config=config, prefix=prefix, layers=tuple(layers))


def make_local_encoders(
    store: ParameterStore, config: EncoderConfig, dim: int
) -> tuple[Encoder, Encoder]:
    """One encoder per domain, each owned by its domain."""
    return (
        make_encoder(store, f"{Domain.A.value}.encoder", config, dim),
        make_encoder(store, f"{Domain.B.value}.encoder", config, dim),
    )


def make_global_encoder(
    store: ParameterStore, config: EncoderConfig, dim: int
) -> Encoder:
    """The single shared encoder that both domains' global paths run through."""
    return make_encoder(store, "shared.encoder", config, dim)


def _self_attention(
    x: Tensor,
    mask: npt.NDArray[np.bool_],
    layer: SelfAttentionLayer,
    heads: int,
    keep: Tensor,
) -> Tensor:
    attended = attend(x, x, layer.attention, mask, heads=heads, causal=True)
    a = layer.norm1(x + attended)
    return layer.norm2(a + mlp_apply(a, layer.ffn)) * keep


def _recurrent(
    x: Tensor, mask: npt.NDArray[np.bool_], layer: RecurrentLayer
) -> Tensor:
    batch, length, dim = x.shape
    projected = x @ layer.input_weight + layer.bias
    h = Tensor(np.zeros((batch, dim)))
    outputs = []
    for t in range(length):
        step = projected[:, t, :]
        recurrent = h @ layer.hidden_weight
        update = sigmoid(step[:, :dim] + recurrent[:, :dim])
        reset = sigmoid(step[:, dim : 2 * dim] + recurrent[:, dim : 2 * dim])
        candidate = tanh(step[:, 2 * dim :] + reset * recurrent[:, 2 * dim :])
        new_h = (1.0 - update) * candidate + update * h
        # Padded steps carry the previous state through unchanged.
        m = mask[:, t, None].astype(np.float64)
        h = new_h * m + h * (1.0 - m)
        outputs.append(h * m)
    return stack(outputs, axis=1)


def encode(embedded: Tensor, mask: npt.ArrayLike, encoder: Encoder) -> Tensor:
    """Run ``encoder`` over a ``(batch, T, D)`` sequence with real positions ``mask``.

    A history with no real position encodes to all zeros.
    """
    valid = np.asarray(mask, dtype=bool)
    keep = Tensor(valid[..., None].astype(np.float64))
    x = embedded * keep
    for layer in encoder.layers:
        if isinstance(layer, SelfAttentionLayer):
            x = _self_attention(x, valid, layer, encoder.config.heads, keep)
        else:
            x = _recurrent(x, valid, layer)
    return x
