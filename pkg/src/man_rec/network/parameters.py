from __future__ import annotations

from collections.abc import Iterator, Mapping, Sequence
from enum import Enum
from typing import Literal

import numpy as np

from man_rec.constants import PADDING_INDEX
from man_rec.errors import CheckpointError
from man_rec.models.config import Domain
from man_rec.numerics.functional import sum_of_squares
from man_rec.numerics.tensor import Array, Tensor
from man_rec.training.initialization import parameter_seed, xavier_init

Init = Literal["xavier", "xavier_rows", "zeros", "ones"]


class Owner(str, Enum):
    """Which part of the objective a parameter belongs to."""

    A = "A"
    B = "B"
    SHARED = "shared"

    @classmethod
    def of(cls, name: str) -> Owner:
        prefix = name.split(".", maxsplit=1)[0]
        try:
            return cls(prefix)
        except ValueError:
            owners = ", ".join(owner.value for owner in cls)
            raise ValueError(
                f"Parameter {name!r} does not start with an owner ({owners})."
            ) from None

    @classmethod
    def for_domain(cls, domain: Domain) -> Owner:
        return cls(domain.value)


class ParameterStore(Mapping[str, Tensor]):
    """Every learnable tensor of a model, keyed by a dotted name.

    The first name component is the owner: ``A`` and ``B`` parameters are exclusive
    to one domain, ``shared`` parameters serve both.
    """

    def __init__(self, seed: int = 0) -> None:
        self.seed = seed
        self._params: dict[str, Tensor] = {}
        self._padded: set[str] = set()

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise KeyError(f"No parameter named {name!r}.") from None

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def __repr__(self) -> str:
        return f"ParameterStore({len(self)} tensors, {self.size} values)"

    def add(
        self,
        name: str,
        shape: Sequence[int],
        init: Init = "xavier",
        *,
        padding_row: bool = False,
    ) -> Tensor:
        """Create a parameter. ``padding_row`` pins row 0 of an item table at zero."""
        if name in self._params:
            raise ValueError(f"Parameter {name!r} already exists.")
        Owner.of(name)
        if init in ("xavier", "xavier_rows"):
            tensor = xavier_init(
                shape,
                parameter_seed(self.seed, name),
                name=name,
                rows=init == "xavier_rows",
            )
        else:
            fill = 0.0 if init == "zeros" else 1.0
            tensor = Tensor(np.full(tuple(shape), fill), requires_grad=True, name=name)
        if padding_row:
            tensor.data[PADDING_INDEX] = 0.0
            self._padded.add(name)
        self._params[name] = tensor
        return tensor

    @property
    def size(self) -> int:
        return sum(tensor.size for tensor in self._params.values())

    def owner(self, name: str) -> Owner:
        if name not in self._params:
            raise KeyError(f"No parameter named {name!r}.")
        return Owner.of(name)

    def names(self, owner: Owner) -> list[str]:
        return [name for name in self._params if Owner.of(name) is owner]

    def owned(self, owner: Owner) -> list[Tensor]:
        return [self._params[name] for name in self.names(owner)]

    def ownership(self) -> dict[Owner, list[str]]:
        """Partition of all names by owner."""
        partition: dict[Owner, list[str]] = {owner: [] for owner in Owner}
        for name in self._params:
            partition[Owner.of(name)].append(name)
        return partition

    def regularization(self, domain: Domain) -> Tensor:
        """Squared norm of the domain's own parameters plus half the shared ones."""
        own = sum_of_squares(self.owned(Owner.for_domain(domain)))
        shared = sum_of_squares(self.owned(Owner.SHARED))
        return own + shared * 0.5

    def zero_grad(self) -> None:
        for tensor in self._params.values():
            tensor.zero_grad()

    def reset_padding(self) -> None:
        for name in self._padded:
            self._params[name].data[PADDING_INDEX] = 0.0

    def arrays(self) -> dict[str, Array]:
        return {name: tensor.data.copy() for name, tensor in self._params.items()}

    def load_arrays(self, arrays: Mapping[str, Array]) -> None:
        """Overwrite every parameter in place, after checking names and shapes."""
        missing = sorted(set(self._params) - set(arrays))
        unexpected = sorted(set(arrays) - set(self._params))
        if missing or unexpected:
            raise CheckpointError(
                f"Parameters do not match the model: missing {missing[:5]}, "
                f"unexpected {unexpected[:5]}."
            )
        for name, tensor in self._params.items():
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise CheckpointError(
                    f"Parameter {name!r} has shape {value.shape} in the checkpoint but "
                    f"{tensor.shape} in the model."
                )
            tensor.data[...] = value
