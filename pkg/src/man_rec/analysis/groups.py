from __future__ import annotations

import logging
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from man_rec.analysis.clustering import (
    Clustering,
    Projection,
    group_alignment_score,
    kmeans,
    pca_2d,
)
from man_rec.data.sequences import SequenceBatch
from man_rec.models.config import Domain
from man_rec.models.records import DatasetSplit, SequenceExample
from man_rec.network.model import MixedAttentionNetwork
from man_rec.numerics.tensor import Array
from man_rec.utils.iteration import batched
from man_rec.utils.results import Cell, write_csv

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroupReprRow:
    user_id: str
    domain: Domain
    # Pooled group representation, length D.
    vector: Array
    true_group: int | None = None


def last_sequences(examples: Iterable[SequenceExample]) -> dict[str, SequenceExample]:
    """The most recent positive example of every user."""
    latest: dict[str, SequenceExample] = {}
    for example in examples:
        if example.label != 1:
            continue
        current = latest.get(example.user_id)
        if current is None or example.timestamp >= current.timestamp:
            latest[example.user_id] = example
    return latest


def export_group_representations(
    model: MixedAttentionNetwork,
    split: DatasetSplit,
    *,
    groups: Mapping[str, int] | None = None,
    domains: Sequence[Domain] = tuple(Domain),
    batch_size: int = 2048,
) -> list[GroupReprRow]:
    """One row per user and domain, from the user's latest training sequence.

    Users of a domain with no training sequence are skipped with a warning.
    """
    rows: list[GroupReprRow] = []
    for domain in domains:
        latest = last_sequences(split.train[domain])
        missing = [user for user in split.users(domain) if user not in latest]
        if missing:
            logger.warning(
                "Skipping %d domain %s users without a training sequence (e.g. %s)",
                len(missing),
                domain.value,
                ", ".join(missing[:3]),
            )
        users = sorted(latest)
        local_to_global = split.local_to_global(domain)
        for chunk in batched(users, batch_size):
            batch = SequenceBatch.from_examples(
                [latest[user] for user in chunk], local_to_global, split.max_len
            )
            vectors = model.group_representations(batch)
            rows.extend(
                GroupReprRow(
                    user_id=user,
                    domain=domain,
                    vector=vector,
                    true_group=None if groups is None else groups.get(user),
                )
                for user, vector in zip(chunk, vectors)
            )
    logger.info("Exported %d group representations", len(rows))
    return rows


def write_group_representations(rows: Sequence[GroupReprRow], path: Path) -> int:
    """CSV ``user_id,domain[,true_group],v_0..v_{D-1}``; the ground-truth column only
    appears when some row has one."""
    dim = len(rows[0].vector) if rows else 0
    with_truth = any(row.true_group is not None for row in rows)
    header = [
        "user_id",
        "domain",
        *(["true_group"] if with_truth else []),
        *(f"v_{i}" for i in range(dim)),
    ]

    def cells(row: GroupReprRow) -> list[Cell]:
        truth: list[Cell] = []
        if with_truth:
            truth = ["" if row.true_group is None else row.true_group]
        return [row.user_id, row.domain.value, *truth, *(float(v) for v in row.vector)]

    return write_csv(path, header, (cells(row) for row in rows))


@dataclass(frozen=True)
class GroupAnalysis:
    """Clusters and 2D projection of one domain's group representations."""

    domain: Domain
    rows: list[GroupReprRow]
    clustering: Clustering
    # None when the representations are all identical.
    projection: Projection | None
    # Only with ground-truth groups for every row.
    alignment: float | None = None


def analyze_groups(
    rows: Sequence[GroupReprRow], k: int, seed: int = 0
) -> list[GroupAnalysis]:
    """Cluster each domain's representations into ``k`` groups and project them."""
    analyses = []
    for domain in Domain:
        domain_rows = [row for row in rows if row.domain is domain]
        if len(domain_rows) < 2:
            logger.warning(
                "Skipping domain %s: %d group representations",
                domain.value,
                len(domain_rows),
            )
            continue
        vectors = np.stack([row.vector for row in domain_rows])
        clustering = kmeans(vectors, min(k, len(domain_rows)), seed)
        projection: Projection | None = None
        variance = ""
        try:
            projection = pca_2d(vectors)
        except ValueError as e:
            logger.warning("No projection for domain %s: %s", domain.value, e)
        else:
            first, second = projection.explained_variance
            variance = f", explained variance {first:.4g} / {second:.4g}"
        truth = [row.true_group for row in domain_rows]
        alignment = None
        if all(group is not None for group in truth):
            alignment = group_alignment_score(clustering.assignments, truth)
        logger.info(
            "Domain %s: %d users in %d clusters%s%s",
            domain.value,
            len(domain_rows),
            len(clustering.centroids),
            variance,
            "" if alignment is None else f", group alignment {alignment:.3f}",
        )
        analyses.append(
            GroupAnalysis(domain, domain_rows, clustering, projection, alignment)
        )
    return analyses


def write_projection(analyses: Sequence[GroupAnalysis], path: Path) -> int:
    """CSV ``user_id,domain,cluster,x,y``; ``x`` and ``y`` stay empty for a domain
    without a projection."""

    def rows() -> Iterator[list[Cell]]:
        for analysis in analyses:
            coordinates: Iterable[Sequence[Cell]] = (
                [("", "")] * len(analysis.rows)
                if analysis.projection is None
                else analysis.projection.coordinates.tolist()
            )
            for row, cluster, (x, y) in zip(
                analysis.rows, analysis.clustering.assignments, coordinates
            ):
                yield [row.user_id, row.domain.value, int(cluster), x, y]

    return write_csv(path, ("user_id", "domain", "cluster", "x", "y"), rows())
