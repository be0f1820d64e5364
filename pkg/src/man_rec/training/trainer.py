from __future__ import annotations

import logging
import math
import time
from collections import defaultdict
from collections.abc import Iterator, Mapping, Sequence
from copy import deepcopy
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from man_rec.data.sequences import SequenceBatch, sample_negatives
from man_rec.errors import CheckpointError, ConfigError, NonFiniteError
from man_rec.evaluation.evaluate import (
    CandidateSet,
    MetricsReport,
    candidate_sets,
    domain_seed,
    evaluate,
)
from man_rec.models.config import Domain, RunConfig, UpdateMode
from man_rec.models.records import DatasetSplit
from man_rec.network.model import MixedAttentionNetwork
from man_rec.numerics.tensor import backward
from man_rec.training.checkpoint import Checkpoint
from man_rec.training.optim import Adam, AdamState
from man_rec.utils.datetime import seconds_to_hms
from man_rec.utils.iteration import batched, paired_longest, roundrobin
from man_rec.utils.logging import progress_bar
from man_rec.utils.results import write_csv

logger = logging.getLogger(__name__)

LOG_HEADER = ("epoch", "domain", "split", "metric", "value")
LogRow = tuple[int, str, str, str, float]


@dataclass
class TrainingResult:
    checkpoint: Checkpoint
    log: list[LogRow]
    model: MixedAttentionNetwork
    # 0 when training never improved on the initial parameters.
    best_epoch: int = 0


def build_model(config: RunConfig, split: DatasetSplit) -> MixedAttentionNetwork:
    return MixedAttentionNetwork(
        config.model,
        {domain: len(split.vocabularies[domain]) for domain in Domain},
        len(split.global_vocabulary),
        seed=config.train.seed,
    )


def checkpoint_config(checkpoint: Checkpoint) -> RunConfig:
    try:
        return RunConfig.model_validate(checkpoint.config)
    except ValidationError as e:
        raise CheckpointError(f"Checkpoint has an invalid config snapshot:\n{e}") from e


def model_from_checkpoint(
    checkpoint: Checkpoint, split: DatasetSplit
) -> tuple[RunConfig, MixedAttentionNetwork]:
    """Rebuild the network a checkpoint was saved from, sized by ``split``."""
    config = checkpoint_config(checkpoint)
    if split.max_len != config.model.max_len:
        raise CheckpointError(
            f"Checkpoint expects sequences of length {config.model.max_len}, "
            f"the split has {split.max_len}."
        )
    model = build_model(config, split)
    model.store.load_arrays(checkpoint.params)
    return config, model


def snapshot(
    config: RunConfig,
    model: MixedAttentionNetwork,
    adam: AdamState | None,
    rng: np.random.Generator,
    epoch: int,
) -> Checkpoint:
    return Checkpoint(
        params=model.store.arrays(),
        config=config.model_dump(mode="json"),
        adam=deepcopy(adam),
        rng_state=deepcopy(rng.bit_generator.state),
        meta={"epoch": epoch},
    )


def schedule(
    mode: UpdateMode, batches: Mapping[Domain, Sequence[SequenceBatch]]
) -> Iterator[dict[Domain, SequenceBatch]]:
    """The batches of each optimizer step in one epoch.

    ``joint`` pairs the A and B batches by position and cycles the shorter domain,
    ``alternating`` takes one domain per step in turn, ``single_*`` uses one domain.
    """
    a, b = batches.get(Domain.A, ()), batches.get(Domain.B, ())
    if mode is UpdateMode.JOINT:
        for batch_a, batch_b in paired_longest(a, b):
            step = {Domain.A: batch_a, Domain.B: batch_b}
            yield {domain: batch for domain, batch in step.items() if batch is not None}
    elif mode is UpdateMode.ALTERNATING:
        for batch in roundrobin(a, b):
            yield {batch.domain: batch}
    else:
        (domain,) = mode.active_domains
        for batch in batches.get(domain, ()):
            yield {domain: batch}


class Trainer:
    """Epoch loop with per-epoch validation and early stopping on the best epoch."""

    def __init__(self, config: RunConfig, split: DatasetSplit) -> None:
        self.config = config
        self.split = split
        self.domains = config.train.update_mode.active_domains
        for domain in self.domains:
            if not split.train[domain]:
                raise ConfigError(f"No training examples for domain {domain.value}.")

        train = config.train
        self.model = build_model(config, split)
        self.optimizer = Adam(
            self.model.store, train.learning_rate, train.beta1, train.beta2, train.eps
        )
        self.rng = np.random.default_rng(train.seed)
        self.validation: dict[Domain, CandidateSet] = candidate_sets(
            split,
            "validation",
            self.domains,
            negatives=train.eval_negatives,
            seed=train.seed,
            batch_size=train.eval_batch_size,
        )

    def epoch_batches(self, epoch: int) -> dict[Domain, list[SequenceBatch]]:
        """Fresh negatives and a fresh shuffle of every active domain."""
        train = self.config.train
        batches = {}
        for domain in self.domains:
            examples = sample_negatives(
                self.split.train[domain],
                self.split.vocabularies[domain],
                train.train_negatives,
                domain_seed(train.seed, epoch, domain=domain),
                exclude=self.split.user_items(domain),
            )
            order = self.rng.permutation(len(examples))
            local_to_global = self.split.local_to_global(domain)
            batches[domain] = [
                SequenceBatch.from_examples(
                    [examples[i] for i in chunk], local_to_global, self.split.max_len
                )
                for chunk in batched(order, train.batch_size)
            ]
        return batches

    def run_epoch(self, epoch: int) -> dict[str, float]:
        """Train one epoch and return the mean of every loss component."""
        train = self.config.train
        totals: defaultdict[str, list[float]] = defaultdict(list)
        steps = schedule(train.update_mode, self.epoch_batches(epoch))
        for step, batches in enumerate(steps, start=1):
            self.model.store.zero_grad()
            breakdown = self.model.loss(batches, train.lambda_a, train.lambda_b)
            values = breakdown.as_dict()
            if not math.isfinite(values["total"]):
                raise NonFiniteError(
                    f"Loss became {values['total']} at epoch {epoch}, step {step}."
                )
            backward(breakdown.total)
            try:
                self.optimizer.step()
            except NonFiniteError as e:
                raise NonFiniteError(f"{e} (epoch {epoch}, step {step})") from e
            for name, value in values.items():
                totals[name].append(value)
        return {name: float(np.mean(values)) for name, values in totals.items()}

    def validate(self) -> MetricsReport:
        return evaluate(self.model, self.validation)

    def train(self) -> TrainingResult:
        config = self.config
        train = config.train
        log: list[LogRow] = []
        best = snapshot(config, self.model, None, self.rng, 0)
        best_score = -math.inf
        best_epoch = 0
        stale = 0

        with progress_bar() as progress:
            task = progress.add_task("Training", total=train.max_epochs)
            for epoch in range(1, train.max_epochs + 1):
                started = time.monotonic()
                losses = self.run_epoch(epoch)
                report = self.validate()
                log.extend(_epoch_rows(epoch, losses, report))
                score = report.mean(train.early_stop_metric, self.domains)
                logger.info(
                    "Epoch %d: train loss %.4f, validation %s %s (%s)",
                    epoch,
                    losses.get("total", math.nan),
                    train.early_stop_metric,
                    "n/a" if score is None else f"{score:.4f}",
                    seconds_to_hms(time.monotonic() - started),
                )
                progress.advance(task)

                # Without validation data every epoch counts as an improvement.
                if score is None or score > best_score:
                    best_score = -math.inf if score is None else score
                    best_epoch = epoch
                    best = snapshot(
                        config, self.model, self.optimizer.state, self.rng, epoch
                    )
                    stale = 0
                    continue
                stale += 1
                if stale >= train.patience:
                    logger.info(
                        "Stopping early after epoch %d, best epoch was %d",
                        epoch,
                        best_epoch,
                    )
                    break

        self.model.store.load_arrays(best.params)
        return TrainingResult(
            checkpoint=best, log=log, model=self.model, best_epoch=best_epoch
        )


def _epoch_rows(
    epoch: int, losses: Mapping[str, float], report: MetricsReport
) -> list[LogRow]:
    rows: list[LogRow] = []
    for domain in Domain:
        name = f"loss_{domain.value}"
        if name in losses:
            rows.append((epoch, domain.value, "train", "loss", losses[name]))
    rows.append((epoch, "all", "train", "total", losses.get("total", math.nan)))
    if "disentangle" in losses:
        rows.append((epoch, "all", "train", "disentangle", losses["disentangle"]))
    rows.extend(
        (epoch, domain, "validation", metric, value)
        for domain, metric, value in report.rows()
    )
    return rows


def train(config: RunConfig, split: DatasetSplit) -> TrainingResult:
    """Train a model on ``split``; ``max_epochs = 0`` returns the initial parameters."""
    return Trainer(config, split).train()


def write_training_log(log: Sequence[LogRow], path: Path) -> int:
    return write_csv(path, LOG_HEADER, log)
