from __future__ import annotations

import math
import zlib
from collections.abc import Sequence

import numpy as np

from man_rec.errors import ShapeError
from man_rec.numerics.tensor import Tensor

Seed = int | Sequence[int]


def parameter_seed(seed: int, name: str) -> list[int]:
    """Seed of one named parameter, independent of creation order."""
    return [seed, zlib.crc32(name.encode("utf-8"))]


def xavier_bound(shape: Sequence[int]) -> float:
    if not shape or any(size < 1 for size in shape):
        raise ShapeError(f"Cannot initialize a tensor of shape {tuple(shape)}.")
    if len(shape) == 1:
        fan_in = fan_out = shape[0]
    elif len(shape) == 2:
        fan_in, fan_out = shape
    else:
        raise ShapeError(
            f"Xavier initialization needs 1 or 2 axes, got shape {tuple(shape)}."
        )
    return math.sqrt(6.0 / (fan_in + fan_out))


def xavier_init(
    shape: Sequence[int],
    seed: Seed,
    *,
    name: str | None = None,
    rows: bool = False,
) -> Tensor:
    """Uniform samples in +/- sqrt(6 / (fan_in + fan_out)).

    A vector counts as ``fan_in = fan_out = len``. With ``rows`` every row of a
    lookup table is initialized as such a vector, so the scale of an item row does
    not shrink with the size of the catalog.
    """
    bound = xavier_bound(shape[-1:] if rows else shape)
    rng = np.random.default_rng(seed)
    return Tensor(
        rng.uniform(-bound, bound, size=tuple(shape)), requires_grad=True, name=name
    )
