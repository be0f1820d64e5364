from __future__ import annotations

from dataclasses import dataclass

import numpy.typing as npt

from man_rec.models.config import Domain
from man_rec.network.parameters import ParameterStore
from man_rec.numerics.tensor import Tensor, broadcast_to, concat, take_rows


@dataclass(frozen=True)
class EmbeddingTable:
    """Item rows plus learnable positional rows; row 0 of ``items`` is padding."""

    items: Tensor
    positions: Tensor

    def lookup(self, indices: npt.ArrayLike) -> Tensor:
        """Item row plus positional row for a ``(batch, T)`` array of item indices."""
        return take_rows(self.items, indices) + self.positions

    def targets(self, indices: npt.ArrayLike) -> Tensor:
        return take_rows(self.items, indices)


def make_embedding_table(
    store: ParameterStore, prefix: str, rows: int, max_len: int, dim: int
) -> EmbeddingTable:
    return EmbeddingTable(
        items=store.add(
            f"{prefix}.items", (rows, dim), "xavier_rows", padding_row=True
        ),
        positions=store.add(f"{prefix}.positions", (max_len, dim)),
    )


def make_domain_embeddings(
    store: ParameterStore, dim: int
) -> dict[Domain, Tensor]:
    return {
        domain: store.add(f"{domain.value}.embedding.domain", (dim,))
        for domain in Domain
    }


def _with_domain(x: Tensor, domain_embedding: Tensor) -> Tensor:
    *lead, _ = x.shape
    return concat(
        [x, broadcast_to(domain_embedding, (*lead, domain_embedding.shape[0]))], axis=-1
    )


def embed_local(
    table: EmbeddingTable, domain_embedding: Tensor, histories: npt.ArrayLike
) -> Tensor:
    """``(batch, T)`` local item indices to ``(batch, T, D)`` rows: item row plus
    positional row, then the domain embedding appended.

    Padding positions keep their positional row and domain embedding; callers mask them.
    """
    return _with_domain(table.lookup(histories), domain_embedding)


def embed_global(
    table: EmbeddingTable, domain_embedding: Tensor, global_histories: npt.ArrayLike
) -> Tensor:
    """Same as :func:`embed_local` over the shared table and global item indices."""
    return _with_domain(table.lookup(global_histories), domain_embedding)


def embed_target(
    table: EmbeddingTable, domain_embedding: Tensor, targets: npt.ArrayLike
) -> Tensor:
    """``(batch,)`` target indices to ``(batch, D)``; targets carry no position."""
    return _with_domain(table.targets(targets), domain_embedding)
