from __future__ import annotations

import logging
from collections import Counter
from collections.abc import Iterable, Sequence
from pathlib import Path

from pydantic import ValidationError

from man_rec.errors import DataFormatError
from man_rec.models.config import Domain
from man_rec.models.records import InteractionRecord

logger = logging.getLogger(__name__)

COLUMNS = ("user_id", "item_id", "timestamp", "label")


def _describe(error: ValidationError) -> str:
    first = error.errors()[0]
    field = ".".join(str(part) for part in first["loc"])
    return f"{field} {first['input']!r}: {first['msg']}"


def parse_interaction_line(
    line: str, domain: Domain, path: str, number: int
) -> InteractionRecord:
    columns = line.rstrip("\r\n").split("\t")
    if len(columns) != len(COLUMNS):
        raise DataFormatError(
            path,
            number,
            f"expected {len(COLUMNS)} tab separated columns, got {len(columns)}",
        )
    try:
        return InteractionRecord.model_validate(
            dict(zip(COLUMNS, columns)) | {"domain": domain}
        )
    except ValidationError as e:
        raise DataFormatError(path, number, _describe(e)) from e


def load_interactions(path: Path | str, domain: Domain) -> list[InteractionRecord]:
    """Read a headerless ``user_id \\t item_id \\t timestamp \\t label`` file.

    Records keep file order. Blank lines are ignored.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataFormatError(str(path), None, "file not found") from None
    except (OSError, UnicodeDecodeError) as e:
        raise DataFormatError(str(path), None, f"cannot read file: {e}") from e

    records = [
        parse_interaction_line(line, domain, str(path), number)
        for number, line in enumerate(text.splitlines(), start=1)
        if line.strip()
    ]
    logger.debug(
        "Loaded %d domain %s records from %s", len(records), domain.value, path
    )
    return records


def write_interactions(path: Path, records: Iterable[InteractionRecord]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as file:
        for record in records:
            columns = (record.user_id, record.item_id, record.timestamp, record.label)
            file.write("\t".join(str(column) for column in columns) + "\n")


def _k_core_domain(
    records: Sequence[InteractionRecord], k: int
) -> list[InteractionRecord]:
    kept = list(records)
    while True:
        users = Counter(record.user_id for record in kept)
        items = Counter(record.item_id for record in kept)
        filtered = [
            record
            for record in kept
            if users[record.user_id] >= k and items[record.item_id] >= k
        ]
        if len(filtered) == len(kept):
            return kept
        kept = filtered


def apply_k_core(
    records: Sequence[InteractionRecord], k: int
) -> list[InteractionRecord]:
    """Drop users and items with fewer than ``k`` interactions, repeatedly.

    Each domain is filtered on its own until nothing changes. Input order is kept.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}.")
    if k == 1:
        return list(records)

    survivors: set[int] = set()
    for domain in Domain:
        domain_records = [r for r in records if r.domain is domain]
        survivors.update(id(r) for r in _k_core_domain(domain_records, k))
    kept = [record for record in records if id(record) in survivors]
    logger.info(
        "%d-core filtering kept %d of %d interactions", k, len(kept), len(records)
    )
    return kept
