from collections.abc import Iterator, Mapping
from pathlib import Path

import numpy as np
import pytest

from man_rec.data.sequences import SequenceBatch, make_split
from man_rec.data.synthetic import synth_generate
from man_rec.errors import NonFiniteError
from man_rec.evaluation.evaluate import MetricsReport, candidate_sets
from man_rec.models.config import (
    DataConfig,
    Domain,
    RunConfig,
    SynthConfig,
    UpdateMode,
)
from man_rec.models.records import DatasetSplit
from man_rec.network.model import MixedAttentionNetwork
from man_rec.network.parameters import Owner
from man_rec.network.prediction import LossBreakdown
from man_rec.numerics.tensor import Tensor, backward
from man_rec.training.checkpoint import load_checkpoint, save_checkpoint
from man_rec.training.optim import Adam
from man_rec.training.trainer import (
    LOG_HEADER,
    Trainer,
    build_model,
    model_from_checkpoint,
    schedule,
    train,
    write_training_log,
)
from man_rec.utils.results import read_csv


def _with_train(config: RunConfig, **update: object) -> RunConfig:
    return config.model_copy(
        update={"train": config.train.model_copy(update=update)}
    )


def _domains(steps: Iterator[dict[Domain, SequenceBatch]]) -> list[list[str]]:
    return [[domain.value for domain in step] for step in steps]


def test_schedule(small_batches: Mapping[Domain, SequenceBatch]) -> None:
    a, b = small_batches[Domain.A], small_batches[Domain.B]
    batches = {Domain.A: [a, a, a], Domain.B: [b]}
    assert _domains(schedule(UpdateMode.JOINT, batches)) == [["A", "B"]] * 3
    assert _domains(schedule(UpdateMode.ALTERNATING, batches)) == [
        ["A"],
        ["B"],
        ["A"],
        ["A"],
    ]
    assert _domains(schedule(UpdateMode.SINGLE_B, batches)) == [["B"]]
    assert _domains(schedule(UpdateMode.JOINT, {Domain.B: [b, b]})) == [["B"]] * 2


def test_joint_steps_cycle_the_shorter_domain(
    small_batches: Mapping[Domain, SequenceBatch],
) -> None:
    a, b = small_batches[Domain.A], small_batches[Domain.B]
    steps = list(schedule(UpdateMode.JOINT, {Domain.A: [a], Domain.B: [b, b]}))
    assert all(step[Domain.A] is a for step in steps)


def test_zero_epochs_keep_the_initial_parameters(
    run_config: RunConfig, small_split: DatasetSplit
) -> None:
    config = _with_train(run_config, max_epochs=0)
    result = train(config, small_split)
    assert result.best_epoch == 0
    assert result.log == []
    initial = build_model(config, small_split).store.arrays()
    for name, value in result.checkpoint.params.items():
        np.testing.assert_array_equal(value, initial[name])


def test_training_logs_every_epoch(
    run_config: RunConfig, small_split: DatasetSplit, tmp_path: Path
) -> None:
    result = train(run_config, small_split)
    assert {row[0] for row in result.log} == {1, 2}
    assert (1, "A", "train", "loss") in {row[:4] for row in result.log}
    assert (1, "all", "train", "disentangle") in {row[:4] for row in result.log}
    assert any(row[2] == "validation" and row[3] == "auc" for row in result.log)
    assert result.checkpoint.meta["epoch"] == result.best_epoch >= 1

    path = tmp_path / "train_log.csv"
    assert write_training_log(result.log, path) == len(result.log)
    assert tuple(read_csv(path)[0]) == LOG_HEADER


def test_training_is_reproducible(
    run_config: RunConfig, small_split: DatasetSplit
) -> None:
    first = train(run_config, small_split).checkpoint.params
    second = train(run_config, small_split).checkpoint.params
    for name, value in first.items():
        np.testing.assert_array_equal(value, second[name])


def test_checkpoint_rebuilds_the_model(
    run_config: RunConfig, small_split: DatasetSplit
) -> None:
    result = train(_with_train(run_config, max_epochs=1), small_split)
    config, model = model_from_checkpoint(result.checkpoint, small_split)
    assert config.model_dump() == _with_train(run_config, max_epochs=1).model_dump()
    batch = Trainer(config, small_split).validation[Domain.A].batches[0]
    np.testing.assert_array_equal(model.scores(batch), result.model.scores(batch))


def test_early_stopping_restores_the_best_epoch(
    run_config: RunConfig,
    small_split: DatasetSplit,
    monkeypatch: pytest.MonkeyPatch,
) -> None:
    scores = iter([0.6, 0.5, 0.4, 0.3])
    snapshots: list[dict[str, np.ndarray]] = []

    def validate(self: Trainer) -> MetricsReport:
        snapshots.append(self.model.store.arrays())
        score = next(scores)
        return MetricsReport(
            metrics={domain: {"auc": score} for domain in Domain},
            losses={domain: 0.5 for domain in Domain},
        )

    monkeypatch.setattr(Trainer, "validate", validate)
    config = _with_train(run_config, max_epochs=4, patience=1)
    result = train(config, small_split)

    assert result.best_epoch == 1
    assert len(snapshots) == 2
    for name, value in result.model.store.arrays().items():
        np.testing.assert_array_equal(value, snapshots[0][name])
    assert not all(
        np.array_equal(value, snapshots[1][name])
        for name, value in snapshots[0].items()
    )


def test_non_finite_loss_names_the_step(
    run_config: RunConfig,
    small_split: DatasetSplit,
    monkeypatch: pytest.MonkeyPatch,
) -> None:
    trainer = Trainer(run_config, small_split)

    def loss(*args: object) -> LossBreakdown:
        return LossBreakdown(Tensor(np.nan), None, None, 0.0, None, None)

    monkeypatch.setattr(trainer.model, "loss", loss)
    with pytest.raises(NonFiniteError, match="epoch 1, step 1"):
        trainer.train()


def test_single_domain_training_leaves_the_other_domain_alone(
    run_config: RunConfig, small_split: DatasetSplit
) -> None:
    config = _with_train(run_config, max_epochs=1, update_mode=UpdateMode.SINGLE_A)
    result = train(config, small_split)
    initial = build_model(config, small_split).store
    for name in initial:
        if name.startswith("B."):
            np.testing.assert_array_equal(
                result.checkpoint.params[name], initial[name].data
            )
    assert {row[1] for row in result.log} <= {"A", "all"}


def _fresh_model(
    config: RunConfig, split: DatasetSplit, seed: int
) -> MixedAttentionNetwork:
    return build_model(_with_train(config, seed=seed), split)


def _adam_steps(
    model: MixedAttentionNetwork,
    batches: Mapping[Domain, SequenceBatch],
    steps: int,
) -> list[float]:
    optimizer = Adam(model.store, 0.01)
    losses = []
    for _ in range(steps):
        model.store.zero_grad()
        loss = model.loss(batches, 1e-5, 1e-5).total
        losses.append(loss.item())
        backward(loss)
        optimizer.step()
    return losses


def test_total_loss_descends_on_a_fixed_batch(
    run_config: RunConfig,
    small_split: DatasetSplit,
    small_batches: Mapping[Domain, SequenceBatch],
) -> None:
    ratios = []
    for seed in range(5):
        model = _fresh_model(run_config, small_split, seed)
        losses = _adam_steps(model, small_batches, 51)
        ratios.append(losses[-1] / losses[0])
    assert float(np.median(ratios)) < 1.0


def test_domain_b_steps_move_shared_parameters_only(
    run_config: RunConfig,
    small_split: DatasetSplit,
    small_batches: Mapping[Domain, SequenceBatch],
) -> None:
    model = _fresh_model(run_config, small_split, 0)
    before = model.store.arrays()
    _adam_steps(model, {Domain.B: small_batches[Domain.B]}, 100)
    after = model.store.arrays()

    for name in model.store.names(Owner.A):
        np.testing.assert_array_equal(after[name], before[name])
    assert not np.array_equal(
        after["shared.gpa.prototypes"], before["shared.gpa.prototypes"]
    )
    encoder = [name for name in model.store.names(Owner.SHARED) if ".encoder." in name]
    assert encoder
    assert any(not np.array_equal(after[name], before[name]) for name in encoder)


def test_saved_checkpoint_scores_held_out_examples_identically(
    run_config: RunConfig, small_split: DatasetSplit, tmp_path: Path
) -> None:
    result = train(_with_train(run_config, max_epochs=1), small_split)
    path = tmp_path / "checkpoint.man"
    save_checkpoint(result.checkpoint, path)
    _, restored = model_from_checkpoint(load_checkpoint(path), small_split)

    held_out = candidate_sets(
        small_split, "test", Domain, negatives=4, seed=5, batch_size=64
    )
    assert held_out
    for candidates in held_out.values():
        for batch in candidates.batches:
            np.testing.assert_array_equal(
                restored.scores(batch), result.model.scores(batch)
            )


# Users only pick items of their own group.
SEPARABLE = SynthConfig(
    users_per_domain=1000, items_per_domain=50, n_groups=5, seq_len_mean=8.0, noise=0.0
)


@pytest.mark.slow
def test_planted_preferences_are_learned() -> None:
    aucs: dict[Domain, list[float]] = {domain: [] for domain in Domain}
    for seed in range(5):
        dataset = synth_generate(SEPARABLE.model_copy(update={"seed": seed}))
        records = dataset.records[Domain.A] + dataset.records[Domain.B]
        config = RunConfig(data=DataConfig(prepared=Path("synthetic"))).with_seed(seed)
        result = train(config, make_split(records, config.model.max_len))
        best = {
            row[1]: row[4]
            for row in result.log
            if row[0] == result.best_epoch and row[2:4] == ("validation", "auc")
        }
        for domain in Domain:
            aucs[domain].append(best[domain.value])
    for domain in Domain:
        assert float(np.median(aucs[domain])) > 0.9, domain
