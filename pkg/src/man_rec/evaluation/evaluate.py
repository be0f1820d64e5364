from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from man_rec.constants import DEFAULT_NDCG_CUTOFF
from man_rec.data.sequences import SequenceBatch, sample_negatives
from man_rec.data.storage import PARTS
from man_rec.errors import ConfigError
from man_rec.evaluation.metrics import ScoredExamples, compute_metrics
from man_rec.models.config import Domain
from man_rec.models.records import DatasetSplit
from man_rec.network.model import MixedAttentionNetwork
from man_rec.network.prediction import domain_loss
from man_rec.numerics.tensor import Tensor
from man_rec.utils.iteration import batched
from man_rec.utils.results import write_csv

logger = logging.getLogger(__name__)

METRICS_HEADER = ("domain", "metric", "value")


def domain_seed(seed: int, *parts: int, domain: Domain) -> list[int]:
    return [seed, *parts, list(Domain).index(domain)]


@dataclass(frozen=True)
class CandidateSet:
    """Fixed evaluation batches of one domain: every positive with its negatives."""

    domain: Domain
    batches: tuple[SequenceBatch, ...]

    def __len__(self) -> int:
        return sum(len(batch) for batch in self.batches)


def candidate_sets(
    split: DatasetSplit,
    part: str,
    domains: Iterable[Domain],
    *,
    negatives: int,
    seed: int,
    batch_size: int,
) -> dict[Domain, CandidateSet]:
    """Draw the candidates of a split part once, so every evaluation sees the same ones.

    Domains without examples in ``part`` are left out with a warning.
    """
    if part not in PARTS:
        raise ConfigError(f"Unknown split part {part!r}, expected one of {PARTS}.")
    sets = {}
    for domain in domains:
        examples = split.part(part)[domain]
        if not examples:
            logger.warning("No %s examples for domain %s", part, domain.value)
            continue
        candidates = sample_negatives(
            examples,
            split.vocabularies[domain],
            negatives,
            domain_seed(seed, PARTS.index(part), domain=domain),
            exclude=split.user_items(domain),
            candidate_sets=True,
        )
        local_to_global = split.local_to_global(domain)
        sets[domain] = CandidateSet(
            domain=domain,
            batches=tuple(
                SequenceBatch.from_examples(chunk, local_to_global, split.max_len)
                for chunk in batched(candidates, batch_size)
            ),
        )
    return sets


def score_candidates(
    model: MixedAttentionNetwork, candidates: CandidateSet
) -> ScoredExamples:
    batches = candidates.batches
    return ScoredExamples(
        user_ids=tuple(user for batch in batches for user in batch.user_ids),
        scores=np.concatenate([model.scores(batch) for batch in batches]),
        labels=np.concatenate([batch.labels for batch in batches]),
        groups=np.concatenate([batch.candidate_sets for batch in batches]),
    )


@dataclass
class MetricsReport:
    """Metrics and log loss per domain from one evaluation pass."""

    metrics: dict[Domain, dict[str, float]] = field(default_factory=dict)
    losses: dict[Domain, float] = field(default_factory=dict)

    def mean(
        self, metric: str, domains: Sequence[Domain] | None = None
    ) -> float | None:
        """Mean of ``metric`` over the requested domains present in the report."""
        values = [
            self.metrics[domain][metric]
            for domain in (domains or list(Domain))
            if domain in self.metrics
        ]
        return float(np.mean(values)) if values else None

    def rows(self, *, include_loss: bool = True) -> list[tuple[str, str, float]]:
        rows = []
        for domain in Domain:
            if domain not in self.metrics:
                continue
            rows.extend(
                (domain.value, metric, value)
                for metric, value in self.metrics[domain].items()
            )
            if include_loss:
                rows.append((domain.value, "loss", self.losses[domain]))
        return rows


def evaluate(
    model: MixedAttentionNetwork,
    candidates: Mapping[Domain, CandidateSet],
    k: int = DEFAULT_NDCG_CUTOFF,
) -> MetricsReport:
    report = MetricsReport()
    for domain, candidate_set in candidates.items():
        scored = score_candidates(model, candidate_set)
        report.metrics[domain] = compute_metrics(scored, k)
        report.losses[domain] = domain_loss(Tensor(scored.scores), scored.labels).item()
        logger.debug(
            "Domain %s: %d candidates, %s",
            domain.value,
            len(candidate_set),
            ", ".join(
                f"{name} {value:.4f}"
                for name, value in report.metrics[domain].items()
            ),
        )
    return report


def write_metrics(report: MetricsReport, path: Path) -> int:
    return write_csv(path, METRICS_HEADER, report.rows())
