from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from man_rec.data.sequences import SequenceBatch, make_split, sample_negatives
from man_rec.data.synthetic import SyntheticDataset, synth_generate
from man_rec.evaluation.evaluate import MetricsReport, evaluate
from man_rec.experiments import held_out_candidates
from man_rec.models.config import (
    DataConfig,
    Domain,
    EncoderConfig,
    ModelConfig,
    RunConfig,
    SynthConfig,
    TrainConfig,
)
from man_rec.models.records import DatasetSplit
from man_rec.network.model import MixedAttentionNetwork
from man_rec.training.trainer import train


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="Also run the long training experiments.",
    )


def pytest_collection_modifyitems(
    config: pytest.Config, items: list[pytest.Item]
) -> None:
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


SMALL_SYNTH = SynthConfig(
    users_per_domain=12,
    items_per_domain=30,
    n_groups=3,
    overlap_user_fraction=0.5,
    overlap_item_fraction=0.2,
    seq_len_mean=6.0,
    noise=0.2,
    seed=7,
)

SMALL_MODEL = ModelConfig(
    item_dim=4,
    domain_dim=2,
    max_len=5,
    n_groups=3,
    encoder=EncoderConfig(layers=1),
    isa_layers=[4],
    head_layers=[4],
)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset() -> SyntheticDataset:
    return synth_generate(SMALL_SYNTH)


@pytest.fixture(scope="session")
def small_split(small_dataset: SyntheticDataset) -> DatasetSplit:
    records = small_dataset.records
    return make_split(records[Domain.A] + records[Domain.B], SMALL_MODEL.max_len)


@pytest.fixture
def small_config() -> ModelConfig:
    return SMALL_MODEL


@pytest.fixture
def small_model(small_split: DatasetSplit) -> MixedAttentionNetwork:
    return MixedAttentionNetwork(
        SMALL_MODEL,
        {domain: len(small_split.vocabularies[domain]) for domain in Domain},
        len(small_split.global_vocabulary),
        seed=3,
    )


@pytest.fixture
def small_batches(small_split: DatasetSplit) -> dict[Domain, SequenceBatch]:
    """Every training positive of a domain followed by one negative."""
    batches = {}
    for domain in Domain:
        examples = sample_negatives(
            small_split.train[domain],
            small_split.vocabularies[domain],
            1,
            [0, list(Domain).index(domain)],
            exclude=small_split.user_items(domain),
        )
        batches[domain] = SequenceBatch.from_examples(
            examples, small_split.local_to_global(domain), small_split.max_len
        )
    return batches


@pytest.fixture
def run_config(tmp_path: Path) -> RunConfig:
    return RunConfig(
        data=DataConfig(prepared=tmp_path / "split"),
        model=SMALL_MODEL,
        train=TrainConfig(
            batch_size=16,
            eval_batch_size=64,
            max_epochs=2,
            patience=1,
            eval_negatives=4,
            learning_rate=0.01,
        ),
    )


# Five planted groups shared by two domains without common users or items; domain
# B has about half as many interactions per user.
TRANSFER_SYNTH = SynthConfig(
    users_per_domain=2000,
    items_per_domain=100,
    n_groups=5,
    seq_len_mean=10.0,
    seq_len_mean_b=5.0,
    noise=0.3,
)
TRANSFER_SEEDS = range(5)


@dataclass(frozen=True)
class TransferRun:
    dataset: SyntheticDataset
    split: DatasetSplit
    model: MixedAttentionNetwork
    test: MetricsReport
    without_gpa: MetricsReport


def _train_and_test(
    config: RunConfig, split: DatasetSplit
) -> tuple[MixedAttentionNetwork, MetricsReport]:
    model = train(config, split).model
    return model, evaluate(model, held_out_candidates(config, split))


@pytest.fixture(scope="session")
def transfer_runs() -> list[TransferRun]:
    """The full model and its variant without group prototypes, trained once per
    seed on a fresh synthetic dataset."""
    runs = []
    for seed in TRANSFER_SEEDS:
        dataset = synth_generate(TRANSFER_SYNTH.model_copy(update={"seed": seed}))
        config = RunConfig(
            data=DataConfig(prepared=Path("synthetic")), train=TrainConfig(seed=seed)
        )
        records = dataset.records
        split = make_split(records[Domain.A] + records[Domain.B], config.model.max_len)
        model, test = _train_and_test(config, split)
        _, without_gpa = _train_and_test(config.with_model(gpa=False), split)
        runs.append(TransferRun(dataset, split, model, test, without_gpa))
    return runs
