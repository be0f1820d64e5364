"""Whole-model gradient audit on a tiny synthetic dataset."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from man_rec.constants import DEFAULT_FD_STEP
from man_rec.data.sequences import SequenceBatch, make_split, sample_negatives
from man_rec.data.synthetic import synth_generate
from man_rec.errors import ConfigError
from man_rec.models.config import Domain, EncoderConfig, ModelConfig, SynthConfig
from man_rec.models.records import DatasetSplit
from man_rec.network.model import MixedAttentionNetwork
from man_rec.numerics.gradcheck import parameter_errors
from man_rec.numerics.tensor import Tensor, backward

logger = logging.getLogger(__name__)

MAX_AUDIT_LEN = 4
MAX_AUDIT_DIM = 6
MAX_AUDIT_GROUPS = 3
AUDIT_USERS = 3
# Central differences at step 1e-5 on an O(1) loss carry about 1e-11 of roundoff,
# so a floor of 1e-8 turns it into relative errors near 1e-3 on parameters whose
# gradient is that small (the domain-B group key, for one).
AUDIT_FLOOR = 1e-6

TINY_MODEL = ModelConfig(
    item_dim=4,
    domain_dim=2,
    max_len=MAX_AUDIT_LEN,
    n_groups=MAX_AUDIT_GROUPS,
    encoder=EncoderConfig(layers=1),
    isa_layers=[4],
    head_layers=[4],
    lambda_g=1e-2,
)


@dataclass(frozen=True)
class GradientReport:
    # Worst relative error of every parameter.
    errors: dict[str, float]
    # Largest |gradient| reaching each encoder parameter from attention alone.
    stop_gradient_leaks: dict[str, float]
    step: float = DEFAULT_FD_STEP
    # Denominator floor of the relative errors.
    floor: float = AUDIT_FLOOR

    @property
    def modules(self) -> dict[str, float]:
        """Worst error per module, e.g. ``A.encoder`` or ``shared.gpa``."""
        worst: defaultdict[str, float] = defaultdict(float)
        for name, error in self.errors.items():
            module = ".".join(name.split(".")[:2])
            worst[module] = max(worst[module], error)
        return dict(sorted(worst.items()))

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def max_leak(self) -> float:
        return max(self.stop_gradient_leaks.values(), default=0.0)

    def passed(self, tolerance: float = 1e-4) -> bool:
        return self.max_error < tolerance and self.max_leak == 0.0

    def rows(self) -> list[tuple[str, str, float]]:
        rows = [
            (module, "relative_error", error)
            for module, error in self.modules.items()
        ]
        rows.append(("all", "fd_step", self.step))
        rows.append(("all", "fd_floor", self.floor))
        rows.append(("all", "stop_gradient_leak", self.max_leak))
        return rows


def tiny_split(seed: int = 0, max_len: int = MAX_AUDIT_LEN) -> DatasetSplit:
    dataset = synth_generate(
        SynthConfig(
            users_per_domain=AUDIT_USERS,
            items_per_domain=12,
            n_groups=2,
            overlap_item_fraction=0.5,
            seq_len_mean=3.5,
            seed=seed,
        )
    )
    records = dataset.records[Domain.A] + dataset.records[Domain.B]
    return make_split(records, max_len)


def audit_batches(split: DatasetSplit, seed: int = 0) -> dict[Domain, SequenceBatch]:
    """Every example of the split with a non-empty history, each positive followed by
    one negative.

    An empty history feeds exact zeros into the group-prototype MLPs, where ReLU has
    a kink that central differences straddle. Vocabularies only hold items someone
    interacted with, so on a catalog this small a user may have seen all of them;
    such users have no negative to draw and are left out.
    """
    batches = {}
    for domain in Domain:
        seen = split.user_items(domain)
        n_items = len(split.vocabularies[domain])
        saturated = {user for user, items in seen.items() if len(items) >= n_items}
        if saturated:
            logger.debug(
                "Leaving out domain %s users without unseen items: %s",
                domain.value,
                ", ".join(sorted(saturated)),
            )
        examples = [
            example
            for part in ("train", "validation", "test")
            for example in split.part(part)[domain]
            if example.items and example.user_id not in saturated
        ]
        if not examples:
            raise ConfigError(
                f"No domain {domain.value} user of the audit data has an unseen item."
            )
        examples = sample_negatives(
            examples,
            split.vocabularies[domain],
            1,
            [seed, list(Domain).index(domain)],
            exclude=seen,
        )
        batches[domain] = SequenceBatch.from_examples(
            examples, split.local_to_global(domain), split.max_len
        )
    return batches


def _check_size(config: ModelConfig) -> None:
    if (
        config.max_len > MAX_AUDIT_LEN
        or config.dim > MAX_AUDIT_DIM
        or config.n_groups > MAX_AUDIT_GROUPS
    ):
        raise ConfigError(
            f"The gradient audit needs T <= {MAX_AUDIT_LEN}, D <= {MAX_AUDIT_DIM} and "
            f"at most {MAX_AUDIT_GROUPS} groups; "
            f"got T={config.max_len}, D={config.dim}, {config.n_groups} groups."
        )


def _build(
    config: ModelConfig, split: DatasetSplit, seed: int
) -> MixedAttentionNetwork:
    return MixedAttentionNetwork(
        config,
        {domain: len(split.vocabularies[domain]) for domain in Domain},
        len(split.global_vocabulary),
        seed=seed,
    )


def stop_gradient_leaks(
    model: MixedAttentionNetwork, batches: dict[Domain, SequenceBatch]
) -> dict[str, float]:
    """Backpropagate only the sequence-fusion and group-prototype outputs and report
    the gradient reaching each encoder parameter."""
    objective: Tensor | None = None
    for batch in batches.values():
        out = model.components(batch)
        for part in (out.fusion, out.group):
            if part is not None:
                objective = part.sum() if objective is None else objective + part.sum()
    if objective is None:
        return {}

    model.store.zero_grad()
    backward(objective)
    leaks = {}
    for name, tensor in model.store.items():
        if ".encoder." in name:
            grad = tensor.grad
            leaks[name] = 0.0 if grad is None else float(np.max(np.abs(grad)))
    return leaks


def verify_gradients(
    config: ModelConfig = TINY_MODEL,
    *,
    seed: int = 0,
    step: float = DEFAULT_FD_STEP,
    floor: float = AUDIT_FLOOR,
    lambda_a: float = 1e-3,
    lambda_b: float = 1e-3,
) -> GradientReport:
    """Check every parameter gradient of the total loss against central differences.

    Finite differences see through stop-gradient edges, so the sweep runs with
    ``stop_gradient`` off; the stop-gradient contract is checked separately with it on.
    """
    _check_size(config)
    split = tiny_split(seed, config.max_len)
    batches = audit_batches(split, seed)

    model = _build(config.model_copy(update={"stop_gradient": False}), split, seed)
    errors = parameter_errors(
        lambda: model.loss(batches, lambda_a, lambda_b).total,
        model.store,
        step,
        floor=floor,
    )

    stopped = _build(config.model_copy(update={"stop_gradient": True}), split, seed)
    report = GradientReport(
        errors, stop_gradient_leaks(stopped, batches), step=step, floor=floor
    )
    logger.info(
        "Checked %d parameters: max relative error %.3g, max stop-gradient leak %.3g",
        len(errors),
        report.max_error,
        report.max_leak,
    )
    return report
