from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from man_rec.data.interactions import write_interactions
from man_rec.errors import DataFormatError
from man_rec.models.config import Domain, SynthConfig
from man_rec.models.records import InteractionRecord
from man_rec.models.util import dump_config

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86_400
NOON = SECONDS_PER_DAY // 2
# Every user gets a training event plus one event on each half of the last day.
MIN_SEQUENCE_LENGTH = 3


@dataclass(frozen=True)
class SyntheticDataset:
    records: dict[Domain, list[InteractionRecord]]
    # Planted group of every user, shared by both domains.
    groups: dict[str, int]
    item_groups: dict[Domain, dict[str, int]]


def _user_ids(config: SynthConfig) -> dict[Domain, list[str]]:
    n = config.users_per_domain
    overlap = round(config.overlap_user_fraction * n)
    users_a = [f"u{i}" for i in range(n)]
    users_b = users_a[:overlap] + [f"u{n + i}" for i in range(n - overlap)]
    return {Domain.A: users_a, Domain.B: users_b}


def _item_ids(config: SynthConfig) -> dict[Domain, list[str]]:
    m = config.items_per_domain
    overlap = round(config.overlap_item_fraction * m)
    shared = [f"i{j}" for j in range(overlap)]
    return {
        Domain.A: shared + [f"a{j}" for j in range(m - overlap)],
        Domain.B: shared + [f"b{j}" for j in range(m - overlap)],
    }


def _timestamps(
    rng: np.random.Generator, length: int, config: SynthConfig
) -> list[int]:
    last_day = config.start_timestamp + (config.days - 1) * SECONDS_PER_DAY
    early = np.sort(
        rng.integers(config.start_timestamp, last_day, size=length - 2)
    ).tolist()
    morning = last_day + int(rng.integers(0, NOON))
    afternoon = last_day + NOON + int(rng.integers(0, NOON))
    return [int(ts) for ts in early] + [morning, afternoon]


def synth_generate(config: SynthConfig) -> SyntheticDataset:
    """Two interaction logs whose users share a planted group structure.

    Each user belongs to one of ``n_groups`` groups, the same group in both domains.
    Each item has a home group, and every group owns at least one item per domain. A
    user picks items from their group's pool with probability ``1 - noise`` and
    uniformly from the whole catalog otherwise, without repeating an item.
    """
    rng = np.random.default_rng(config.seed)
    users = _user_ids(config)
    items = _item_ids(config)

    all_users = sorted(
        set(users[Domain.A]) | set(users[Domain.B]), key=lambda u: int(u[1:])
    )
    groups = {
        user: int(group)
        for user, group in zip(
            all_users, rng.integers(0, config.n_groups, size=len(all_users))
        )
    }

    item_groups: dict[Domain, dict[str, int]] = {}
    shared_homes: dict[str, int] = {}
    for domain in Domain:
        homes = rng.permutation(np.arange(config.items_per_domain) % config.n_groups)
        domain_homes = {}
        for item, home in zip(items[domain], homes):
            # An item id present in both catalogs keeps one home group.
            domain_homes[item] = shared_homes.setdefault(item, int(home))
        item_groups[domain] = domain_homes

    records: dict[Domain, list[InteractionRecord]] = {}
    for domain in Domain:
        catalog = items[domain]
        homes = np.array([item_groups[domain][item] for item in catalog])
        mean_length = (
            config.seq_len_mean_b
            if domain is Domain.B and config.seq_len_mean_b is not None
            else config.seq_len_mean
        )
        domain_records = []
        for user in users[domain]:
            in_group = homes == groups[user]
            if in_group.any():
                pool = in_group / in_group.sum()
            else:
                pool = np.full(len(catalog), 1.0 / len(catalog))
            weights = config.noise / len(catalog) + (1.0 - config.noise) * pool
            weights = weights / weights.sum()
            length = MIN_SEQUENCE_LENGTH + int(
                rng.poisson(max(mean_length - MIN_SEQUENCE_LENGTH, 0.0))
            )
            length = min(length, int(np.count_nonzero(weights)))
            chosen = rng.choice(len(catalog), size=length, replace=False, p=weights)
            timestamps = (
                _timestamps(rng, length, config)
                if length >= MIN_SEQUENCE_LENGTH
                else _timestamps(rng, MIN_SEQUENCE_LENGTH, config)[-length:]
            )
            domain_records.extend(
                InteractionRecord(
                    user_id=user,
                    item_id=catalog[int(index)],
                    timestamp=timestamp,
                    label=1,
                    domain=domain,
                )
                for index, timestamp in zip(chosen, timestamps)
            )
        records[domain] = domain_records
        logger.info(
            "Generated %d domain %s interactions for %d users",
            len(domain_records),
            domain.value,
            len(users[domain]),
        )
    return SyntheticDataset(records=records, groups=groups, item_groups=item_groups)


def write_synthetic(dataset: SyntheticDataset, config: SynthConfig, out: Path) -> None:
    """Write ``interactions_A.tsv``, ``interactions_B.tsv``, ``groups.tsv`` and the
    generating ``synth.cfg`` into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    for domain, records in dataset.records.items():
        write_interactions(out / f"interactions_{domain.value}.tsv", records)
    with (out / "groups.tsv").open("w", encoding="utf-8", newline="\n") as file:
        for user, group in dataset.groups.items():
            file.write(f"{user}\t{group}\n")
    (out / "synth.cfg").write_text(dump_config(config), encoding="utf-8")


def read_groups(path: Path) -> dict[str, int]:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataFormatError(str(path), None, "file not found") from None
    groups = {}
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        user, sep, group = line.partition("\t")
        if not sep or not group.strip().isdigit():
            raise DataFormatError(str(path), number, "expected `user_id \\t group_id`")
        groups[user] = int(group)
    return groups
