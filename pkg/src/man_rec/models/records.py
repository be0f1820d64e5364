from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt

from man_rec.constants import PADDING_INDEX
from man_rec.models.config import Domain
from man_rec.numerics.tensor import IndexArray


class InteractionRecord(BaseModel):
    """One line of an interaction log."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    user_id: str = Field(min_length=1)
    item_id: str = Field(min_length=1)
    timestamp: NonNegativeInt
    label: int = Field(ge=0, le=1)
    domain: Domain

    @property
    def sort_key(self) -> tuple[int, str]:
        # Timestamp ties are broken by item id.
        return self.timestamp, self.item_id


@dataclass(frozen=True)
class SequenceExample:
    """A target item with the user's earlier items in the same domain.

    ``history`` holds local vocabulary indices, front-padded with zeros to the
    sequence length, oldest item first.
    """

    user_id: str
    domain: Domain
    history: tuple[int, ...]
    target_item: int
    label: int
    timestamp: int
    # Evaluation candidate set (one positive plus its negatives), -1 for training rows.
    candidate_set: int = -1

    @property
    def mask(self) -> tuple[bool, ...]:
        return tuple(item != PADDING_INDEX for item in self.history)

    @property
    def items(self) -> tuple[int, ...]:
        """The real (unpadded) part of the history."""
        return tuple(item for item in self.history if item != PADDING_INDEX)

    @property
    def max_len(self) -> int:
        return len(self.history)

    def with_target(
        self, item: int, label: int, candidate_set: int | None = None
    ) -> SequenceExample:
        return SequenceExample(
            user_id=self.user_id,
            domain=self.domain,
            history=self.history,
            target_item=item,
            label=label,
            timestamp=self.timestamp,
            candidate_set=(
                self.candidate_set if candidate_set is None else candidate_set
            ),
        )


def pad_history(items: Iterable[int], max_len: int) -> tuple[int, ...]:
    """Keep the most recent ``max_len`` items and front-pad with the padding index."""
    recent = tuple(items)[-max_len:] if max_len else ()
    return (PADDING_INDEX,) * (max_len - len(recent)) + recent


class Vocabulary:
    """Item ids of one catalog mapped to 1-based indices in sorted id order.

    Index 0 is the padding item and never maps to an id.
    """

    def __init__(self, item_ids: Iterable[str]) -> None:
        self._ids: tuple[str, ...] = tuple(sorted(set(item_ids)))
        self._index = {item: i for i, item in enumerate(self._ids, start=1)}

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, item_id: object) -> bool:
        return item_id in self._index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self._ids == other._ids

    def __repr__(self) -> str:
        return f"Vocabulary({len(self)} items)"

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    @property
    def size(self) -> int:
        """Number of table rows needed, padding row included."""
        return len(self._ids) + 1

    def index(self, item_id: str) -> int:
        try:
            return self._index[item_id]
        except KeyError:
            raise KeyError(f"Unknown item id {item_id!r}.") from None

    def item_id(self, index: int) -> str:
        if not 1 <= index <= len(self._ids):
            raise IndexError(
                f"Item index {index} out of range, "
                f"valid indices are 1..{len(self._ids)}."
            )
        return self._ids[index - 1]


@dataclass
class DatasetSplit:
    """Chronologically split examples of both domains with their vocabularies."""

    vocabularies: Mapping[Domain, Vocabulary]
    max_len: int
    train: dict[Domain, list[SequenceExample]] = field(default_factory=dict)
    validation: dict[Domain, list[SequenceExample]] = field(default_factory=dict)
    test: dict[Domain, list[SequenceExample]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for part in (self.train, self.validation, self.test):
            for domain in Domain:
                part.setdefault(domain, [])

    def part(self, name: str) -> dict[Domain, list[SequenceExample]]:
        if name not in ("train", "validation", "test"):
            raise ValueError(f"Unknown split {name!r}.")
        parts: dict[str, dict[Domain, list[SequenceExample]]] = {
            "train": self.train,
            "validation": self.validation,
            "test": self.test,
        }
        return parts[name]

    @cached_property
    def global_vocabulary(self) -> Vocabulary:
        """Union of both catalogs; an id present in both domains gets one row."""
        return Vocabulary(
            item for vocab in self.vocabularies.values() for item in vocab.ids
        )

    def local_to_global(self, domain: Domain) -> IndexArray:
        """Local item index to global item index; padding maps to padding."""
        return self._local_to_global[domain]

    @cached_property
    def _local_to_global(self) -> dict[Domain, IndexArray]:
        tables = {}
        for domain, vocab in self.vocabularies.items():
            table = np.zeros(vocab.size, dtype=np.int64)
            for index, item in enumerate(vocab.ids, start=1):
                table[index] = self.global_vocabulary.index(item)
            tables[domain] = table
        return tables

    @cached_property
    def _user_items(self) -> dict[Domain, dict[str, frozenset[int]]]:
        positives: dict[Domain, dict[str, set[int]]] = {d: {} for d in Domain}
        for part in (self.train, self.validation, self.test):
            for domain, examples in part.items():
                for example in examples:
                    items = positives[domain].setdefault(example.user_id, set())
                    items.update(example.items)
                    if example.label == 1:
                        items.add(example.target_item)
        return {
            domain: {user: frozenset(items) for user, items in users.items()}
            for domain, users in positives.items()
        }

    def user_items(self, domain: Domain) -> dict[str, frozenset[int]]:
        """Every item each user interacted with positively in ``domain``."""
        return self._user_items[domain]

    def users(self, domain: Domain) -> list[str]:
        return sorted(self.user_items(domain))

