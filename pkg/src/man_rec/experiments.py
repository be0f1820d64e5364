"""Ablation, group-number sweep and backbone study.

Every runner trains its configurations one after another and reports test metrics,
one row per configuration, domain and metric.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence

from man_rec.constants import DEFAULT_GROUP_SWEEP
from man_rec.evaluation.evaluate import (
    CandidateSet,
    MetricsReport,
    candidate_sets,
    evaluate,
)
from man_rec.models.config import Backbone, Domain, ModelMode, RunConfig
from man_rec.models.records import DatasetSplit
from man_rec.training.trainer import train

logger = logging.getLogger(__name__)

ABLATIONS: dict[str, dict[str, bool]] = {
    "w/o ISA": {"isa": False},
    "w/o SFA": {"sfa": False},
    "w/o GPA": {"gpa": False},
    "w all": {},
}

ABLATION_HEADER = ("config", "domain", "metric", "value")
SWEEP_HEADER = ("n_groups", "domain", "metric", "value")
BACKBONE_HEADER = ("backbone", "mode", "domain", "metric", "value")


def held_out_candidates(
    config: RunConfig, split: DatasetSplit
) -> dict[Domain, CandidateSet]:
    """Test candidates of the domains the run trains."""
    return candidate_sets(
        split,
        "test",
        config.train.update_mode.active_domains,
        negatives=config.train.eval_negatives,
        seed=config.train.seed,
        batch_size=config.train.eval_batch_size,
    )


def train_and_test(config: RunConfig, split: DatasetSplit) -> MetricsReport:
    """Train with early stopping, then score the active domains' test candidates."""
    result = train(config, split)
    return evaluate(result.model, held_out_candidates(config, split))


def _run(
    label: str, index: int, total: int, config: RunConfig, split: DatasetSplit
) -> MetricsReport:
    logger.info("Configuration %d/%d: %s", index, total, label)
    return train_and_test(config, split)


def ablate(config: RunConfig, split: DatasetSplit) -> list[tuple[str, str, str, float]]:
    """The full model against each attention component switched off."""
    rows = []
    for index, (label, switches) in enumerate(ABLATIONS.items(), start=1):
        variant = config.with_model(mode=ModelMode.CROSS, **switches)
        report = _run(label, index, len(ABLATIONS), variant, split)
        rows.extend((label, *row) for row in report.rows(include_loss=False))
    return rows


def sweep_groups(
    config: RunConfig,
    split: DatasetSplit,
    values: Sequence[int] = DEFAULT_GROUP_SWEEP,
) -> list[tuple[int, str, str, float]]:
    if not values or min(values) < 1:
        raise ValueError(f"Group numbers must be positive, got {list(values)}.")
    rows = []
    for index, n_groups in enumerate(values, start=1):
        variant = config.with_model(n_groups=n_groups)
        report = _run(f"{n_groups} groups", index, len(values), variant, split)
        rows.extend((n_groups, *row) for row in report.rows(include_loss=False))
    return rows


def backbones(
    config: RunConfig, split: DatasetSplit
) -> list[tuple[str, str, str, str, float]]:
    """Each backbone trained per domain only, shared across domains, and in the full
    cross-domain model."""
    runs = [(backbone, mode) for backbone in Backbone for mode in ModelMode]
    rows = []
    for index, (backbone, mode) in enumerate(runs, start=1):
        encoder = config.model.encoder.model_copy(update={"backbone": backbone})
        variant = config.with_model(mode=mode, encoder=encoder)
        label = f"{backbone.value} / {mode.value}"
        report = _run(label, index, len(runs), variant, split)
        rows.extend(
            (backbone.value, mode.value, *row)
            for row in report.rows(include_loss=False)
        )
    return rows
