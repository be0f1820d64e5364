from __future__ import annotations

import logging
from collections import defaultdict
from collections.abc import Collection, Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from man_rec.errors import ConfigError, NegativeSamplingError
from man_rec.models.config import Domain
from man_rec.models.records import (
    DatasetSplit,
    InteractionRecord,
    SequenceExample,
    Vocabulary,
    pad_history,
)
from man_rec.numerics.tensor import Array, BoolArray, IndexArray
from man_rec.utils.datetime import format_timestamp, last_day_boundaries

logger = logging.getLogger(__name__)

Seed = int | Sequence[int]

# Dense draws are cheaper than rejection once most of the catalog is excluded.
_REJECTION_LIMIT = 0.5


def build_vocabularies(
    records: Iterable[InteractionRecord],
) -> dict[Domain, Vocabulary]:
    items: dict[Domain, set[str]] = {domain: set() for domain in Domain}
    for record in records:
        items[record.domain].add(record.item_id)
    return {domain: Vocabulary(ids) for domain, ids in items.items()}


def build_sequences(
    records: Iterable[InteractionRecord],
    max_len: int,
    vocabularies: Mapping[Domain, Vocabulary] | None = None,
) -> list[SequenceExample]:
    """Turn each user's log into (history, target) examples, one per interaction.

    A user's events are ordered by timestamp, then item id. The history of an
    event holds the user's positive items with a strictly earlier timestamp, the
    most recent ``max_len`` of them. Rows labelled 0 in the log become label-0
    examples but never enter a history.
    """
    records = list(records)
    if vocabularies is None:
        vocabularies = build_vocabularies(records)

    logs: defaultdict[tuple[Domain, str], list[InteractionRecord]] = defaultdict(list)
    for record in records:
        logs[record.domain, record.user_id].append(record)

    examples = []
    for (domain, user_id), events in sorted(logs.items()):
        vocab = vocabularies[domain]
        events.sort(key=lambda record: record.sort_key)
        positives: list[tuple[int, int]] = []
        visible = 0
        for event in events:
            while visible < len(positives) and positives[visible][0] < event.timestamp:
                visible += 1
            history = pad_history((item for _, item in positives[:visible]), max_len)
            target = vocab.index(event.item_id)
            examples.append(
                SequenceExample(
                    user_id=user_id,
                    domain=domain,
                    history=history,
                    target_item=target,
                    label=event.label,
                    timestamp=event.timestamp,
                )
            )
            if event.label == 1:
                positives.append((event.timestamp, target))
    return examples


def user_positive_items(
    examples: Iterable[SequenceExample],
) -> dict[str, set[int]]:
    items: defaultdict[str, set[int]] = defaultdict(set)
    for example in examples:
        items[example.user_id].update(example.items)
        if example.label == 1:
            items[example.user_id].add(example.target_item)
    return dict(items)


def _draw(
    rng: np.random.Generator, n_items: int, excluded: Collection[int], count: int
) -> list[int]:
    if len(excluded) > _REJECTION_LIMIT * n_items:
        allowed = np.setdiff1d(
            np.arange(1, n_items + 1), np.fromiter(excluded, dtype=np.int64)
        )
        return [int(item) for item in rng.choice(allowed, size=count, replace=False)]

    chosen: list[int] = []
    while len(chosen) < count:
        item = int(rng.integers(1, n_items + 1))
        if item not in excluded and item not in chosen:
            chosen.append(item)
    return chosen


def sample_negatives(
    examples: Sequence[SequenceExample],
    vocabulary: Vocabulary | int,
    ratio: int,
    seed: Seed,
    *,
    exclude: Mapping[str, Collection[int]] | None = None,
    candidate_sets: bool = False,
) -> list[SequenceExample]:
    """Follow every positive example with ``ratio`` label-0 copies.

    Negative targets are distinct items drawn uniformly from the vocabulary, excluding
    everything the user interacted with positively (``exclude``, or what ``examples``
    show when not given). With ``candidate_sets`` each positive and its negatives
    share a fresh candidate set id, as needed by the ranking metrics.
    """
    if ratio < 1:
        raise ValueError(f"ratio must be at least 1, got {ratio}.")
    n_items = vocabulary if isinstance(vocabulary, int) else len(vocabulary)
    if exclude is None:
        exclude = user_positive_items(examples)

    rng = np.random.default_rng(seed)
    output: list[SequenceExample] = []
    next_set = 0
    for example in examples:
        if example.label != 1:
            output.append(example)
            continue
        excluded = exclude.get(example.user_id, ())
        available = n_items - len(excluded)
        if available < ratio:
            raise NegativeSamplingError(
                f"User {example.user_id!r} has {available} unseen items in a "
                f"{n_items} item vocabulary, {ratio} negatives requested."
            )
        group = next_set if candidate_sets else example.candidate_set
        next_set += 1
        output.append(example.with_target(example.target_item, 1, group))
        output.extend(
            example.with_target(item, 0, group)
            for item in _draw(rng, n_items, excluded, ratio)
        )
    return output


def chronological_split(
    examples: Iterable[SequenceExample],
    val_boundary: int,
    test_boundary: int,
    *,
    vocabularies: Mapping[Domain, Vocabulary] | None = None,
    max_len: int | None = None,
) -> DatasetSplit:
    """Assign examples by target timestamp: before ``val_boundary`` to train, before
    ``test_boundary`` to validation, the rest to test."""
    if val_boundary >= test_boundary:
        raise ConfigError(
            f"Validation boundary {val_boundary} must be earlier than test boundary "
            f"{test_boundary}."
        )
    examples = list(examples)
    if max_len is None:
        max_len = examples[0].max_len if examples else 0
    split = DatasetSplit(
        vocabularies=vocabularies or {domain: Vocabulary(()) for domain in Domain},
        max_len=max_len,
    )
    for example in examples:
        if example.timestamp < val_boundary:
            part = split.train
        elif example.timestamp < test_boundary:
            part = split.validation
        else:
            part = split.test
        part[example.domain].append(example)
    return split


def make_split(
    records: Sequence[InteractionRecord],
    max_len: int,
    val_boundary: int | None = None,
    test_boundary: int | None = None,
) -> DatasetSplit:
    """Vocabularies, sequences and chronological split of an already filtered log.

    Missing boundaries follow the last-day protocol of the latest event in the log.
    """
    if not records:
        raise ConfigError("No interactions left to build a dataset from.")
    if val_boundary is None or test_boundary is None:
        default_val, default_test = last_day_boundaries(
            max(record.timestamp for record in records)
        )
        val_boundary = default_val if val_boundary is None else val_boundary
        test_boundary = default_test if test_boundary is None else test_boundary

    vocabularies = build_vocabularies(records)
    split = chronological_split(
        build_sequences(records, max_len, vocabularies),
        val_boundary,
        test_boundary,
        vocabularies=vocabularies,
        max_len=max_len,
    )
    logger.info(
        "Split at %s / %s",
        format_timestamp(val_boundary),
        format_timestamp(test_boundary),
    )
    for domain in Domain:
        logger.info(
            "Domain %s: %d items, %d train / %d validation / %d test examples",
            domain.value,
            len(vocabularies[domain]),
            len(split.train[domain]),
            len(split.validation[domain]),
            len(split.test[domain]),
        )
    return split


@dataclass(frozen=True)
class SequenceBatch:
    """Examples of one domain stacked into arrays."""

    domain: Domain
    user_ids: tuple[str, ...]
    histories: IndexArray
    global_histories: IndexArray
    mask: BoolArray
    targets: IndexArray
    global_targets: IndexArray
    labels: Array
    candidate_sets: IndexArray

    def __len__(self) -> int:
        return len(self.user_ids)

    @classmethod
    def from_examples(
        cls,
        examples: Sequence[SequenceExample],
        local_to_global: IndexArray,
        max_len: int,
    ) -> SequenceBatch:
        if not examples:
            raise ValueError("Cannot build a batch from no examples.")
        domains = {example.domain for example in examples}
        if len(domains) != 1:
            names = sorted(domain.value for domain in domains)
            raise ValueError(f"A batch holds one domain, got {names}.")
        histories = np.zeros((len(examples), max_len), dtype=np.int64)
        for row, example in enumerate(examples):
            if example.max_len != max_len:
                raise ValueError(
                    f"History of length {example.max_len} "
                    f"in a batch of length {max_len}."
                )
            histories[row] = example.history
        targets = np.array(
            [example.target_item for example in examples], dtype=np.int64
        )
        return cls(
            domain=domains.pop(),
            user_ids=tuple(example.user_id for example in examples),
            histories=histories,
            global_histories=local_to_global[histories],
            mask=histories != 0,
            targets=targets,
            global_targets=local_to_global[targets],
            labels=np.array([example.label for example in examples], dtype=np.float64),
            candidate_sets=np.array(
                [example.candidate_set for example in examples], dtype=np.int64
            ),
        )
