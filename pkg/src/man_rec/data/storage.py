"""Directory format of a prepared dataset split.

::

    vocab_A.tsv, vocab_B.tsv        one item id per line, line n is item index n
    {train,validation,test}_{A,B}.tsv
                                    user_id \\t item_id \\t timestamp \\t label \\t history
                                    (history: space separated item ids, oldest first)
    split.cfg                       max_len = T
"""

from __future__ import annotations

import logging
from pathlib import Path

from man_rec.data.interactions import apply_k_core, load_interactions
from man_rec.data.sequences import make_split
from man_rec.errors import ConfigError, DataFormatError
from man_rec.models.config import DataConfig, Domain
from man_rec.models.records import (
    DatasetSplit,
    SequenceExample,
    Vocabulary,
    pad_history,
)
from man_rec.models.util import read_config_file

logger = logging.getLogger(__name__)

PARTS = ("train", "validation", "test")
SPLIT_CONFIG = "split.cfg"


def _vocabulary_path(directory: Path, domain: Domain) -> Path:
    return directory / f"vocab_{domain.value}.tsv"


def _part_path(directory: Path, part: str, domain: Domain) -> Path:
    return directory / f"{part}_{domain.value}.tsv"


def write_split(split: DatasetSplit, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for domain, vocab in split.vocabularies.items():
        _vocabulary_path(directory, domain).write_text(
            "".join(f"{item}\n" for item in vocab.ids), encoding="utf-8"
        )
        for part in PARTS:
            with _part_path(directory, part, domain).open(
                "w", encoding="utf-8", newline="\n"
            ) as file:
                for example in split.part(part)[domain]:
                    history = " ".join(vocab.item_id(item) for item in example.items)
                    file.write(
                        f"{example.user_id}\t{vocab.item_id(example.target_item)}\t"
                        f"{example.timestamp}\t{example.label}\t{history}\n"
                    )
    (directory / SPLIT_CONFIG).write_text(
        f"max_len = {split.max_len}\n", encoding="utf-8"
    )
    logger.info("Wrote prepared split to %s", directory)


def _read_vocabulary(path: Path) -> Vocabulary:
    try:
        ids = [line for line in path.read_text(encoding="utf-8").splitlines() if line]
    except FileNotFoundError:
        raise DataFormatError(str(path), None, "file not found") from None
    vocab = Vocabulary(ids)
    if list(vocab.ids) != ids:
        raise DataFormatError(str(path), None, "item ids must be unique and sorted")
    return vocab


def _parse_example(
    line: str, domain: Domain, vocab: Vocabulary, max_len: int, path: Path, number: int
) -> SequenceExample:
    columns = line.rstrip("\r\n").split("\t")
    if len(columns) != 5:
        raise DataFormatError(
            str(path), number, f"expected 5 columns, got {len(columns)}"
        )
    user_id, item_id, timestamp, label, history = columns
    if not timestamp.isdigit():
        raise DataFormatError(
            str(path), number, f"timestamp {timestamp!r} is not an integer"
        )
    if label not in ("0", "1"):
        raise DataFormatError(str(path), number, f"label {label!r} is not 0 or 1")
    try:
        items = [vocab.index(item) for item in history.split()]
        target = vocab.index(item_id)
    except KeyError as e:
        raise DataFormatError(str(path), number, str(e.args[0])) from e
    return SequenceExample(
        user_id=user_id,
        domain=domain,
        history=pad_history(items, max_len),
        target_item=target,
        label=int(label),
        timestamp=int(timestamp),
    )


def read_split(directory: Path) -> DatasetSplit:
    config_path = directory / SPLIT_CONFIG
    if not config_path.is_file():
        raise ConfigError(f"{directory} is not a prepared split (no {SPLIT_CONFIG}).")
    settings = read_config_file(config_path)
    try:
        max_len = int(settings["max_len"])
    except (KeyError, ValueError) as e:
        raise ConfigError(f"{config_path}: needs an integer `max_len`") from e

    vocabularies = {
        domain: _read_vocabulary(_vocabulary_path(directory, domain))
        for domain in Domain
    }
    split = DatasetSplit(vocabularies=vocabularies, max_len=max_len)
    for domain, vocab in vocabularies.items():
        for part in PARTS:
            path = _part_path(directory, part, domain)
            try:
                lines = path.read_text(encoding="utf-8").splitlines()
            except FileNotFoundError:
                raise DataFormatError(str(path), None, "file not found") from None
            split.part(part)[domain].extend(
                _parse_example(line, domain, vocab, max_len, path, number)
                for number, line in enumerate(lines, start=1)
                if line.strip()
            )
    return split


def load_split(data: DataConfig, max_len: int) -> DatasetSplit:
    """The split a run works on, read from disk or prepared from raw logs."""
    if data.prepared is not None:
        split = read_split(data.prepared)
        if split.max_len != max_len:
            raise ConfigError(
                f"{data.prepared} was prepared with max_len {split.max_len}, "
                f"the model expects {max_len}."
            )
        return split

    assert data.input_a is not None and data.input_b is not None
    records = load_interactions(data.input_a, Domain.A) + load_interactions(
        data.input_b, Domain.B
    )
    records = apply_k_core(records, data.k_core)
    return make_split(records, max_len, data.val_boundary, data.test_boundary)
