from __future__ import annotations

import math
import sys
from enum import Enum
from pathlib import Path
from typing import Annotated, Literal

from pydantic import (
    BeforeValidator,
    Field,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    model_validator,
)

from man_rec.constants import (
    DEFAULT_EVAL_NEGATIVES,
    DEFAULT_LEARNING_RATE,
    DEFAULT_TRAIN_NEGATIVES,
)
from man_rec.models.util import ConfigBaseModel, split_csv

if sys.version_info >= (3, 11):
    from typing import Self
else:
    from typing_extensions import Self

IntList = Annotated[list[PositiveInt], BeforeValidator(split_csv)]
Fraction = Annotated[float, Field(ge=0.0, le=1.0)]


class Domain(str, Enum):
    A = "A"
    B = "B"


class Backbone(str, Enum):
    SELF_ATTENTION = "self_attention"
    GATED_RECURRENT = "gated_recurrent"


class ModelMode(str, Enum):
    """Which parts of the network exist.

    ``single``: local embeddings, encoder and head per domain, nothing shared.
    ``shared``: one shared embedding table, encoder and head used by both domains.
    ``cross``: the full mixed attention network.
    """

    SINGLE = "single"
    SHARED = "shared"
    CROSS = "cross"


class UpdateMode(str, Enum):
    JOINT = "joint"
    ALTERNATING = "alternating"
    SINGLE_A = "single_a"
    SINGLE_B = "single_b"

    @property
    def active_domains(self) -> tuple[Domain, ...]:
        if self is UpdateMode.SINGLE_A:
            return (Domain.A,)
        if self is UpdateMode.SINGLE_B:
            return (Domain.B,)
        return (Domain.A, Domain.B)


class SynthConfig(ConfigBaseModel):
    users_per_domain: PositiveInt = 200
    items_per_domain: PositiveInt = 100
    n_groups: PositiveInt = 5
    overlap_user_fraction: Fraction = 0.0
    overlap_item_fraction: Fraction = 0.0
    seq_len_mean: PositiveFloat = 10.0
    # Mean sequence length of domain B when it should be sparser than A.
    seq_len_mean_b: PositiveFloat | None = None
    noise: Fraction = 0.3
    seed: int = 0
    # 2021-09-11 00:00:00 UTC.
    start_timestamp: NonNegativeInt = 1_631_318_400
    days: Annotated[int, Field(ge=2)] = 12

    @model_validator(mode="after")
    def check_group_pools(self) -> Self:
        if self.items_per_domain < self.n_groups:
            raise ValueError(
                f"items_per_domain ({self.items_per_domain}) must be at least "
                f"n_groups ({self.n_groups}) so every group owns an item."
            )
        return self


class EncoderConfig(ConfigBaseModel):
    backbone: Backbone = Backbone.SELF_ATTENTION
    layers: PositiveInt = 2
    heads: Annotated[int, Field(ge=1, le=4)] = 1
    # Width of the position-wise MLP; defaults to the model dimension.
    hidden: PositiveInt | None = None


class ModelConfig(ConfigBaseModel):
    item_dim: PositiveInt = 16
    domain_dim: PositiveInt | None = None
    max_len: PositiveInt = 20
    n_groups: PositiveInt = 5
    encoder: EncoderConfig = EncoderConfig()
    isa_layers: IntList = [32, 16]
    head_layers: IntList = [20, 10]
    mode: ModelMode = ModelMode.CROSS
    isa: bool = True
    sfa: bool = True
    gpa: bool = True
    # Average the pooled rows over real positions instead of summing them.
    mean_pooling: bool = True
    stop_gradient: bool = True
    lambda_g: Annotated[float, Field(ge=0.0)] = 1e-4

    @property
    def resolved_domain_dim(self) -> int:
        return self.domain_dim or math.ceil(self.item_dim / 4)

    @property
    def dim(self) -> int:
        """Width of every sequence row: item embedding plus domain embedding."""
        return self.item_dim + self.resolved_domain_dim

    @property
    def uses_isa(self) -> bool:
        return self.mode is ModelMode.CROSS and self.isa

    @property
    def uses_sfa(self) -> bool:
        return self.mode is ModelMode.CROSS and self.sfa

    @property
    def uses_gpa(self) -> bool:
        return self.mode is ModelMode.CROSS and self.gpa

    @property
    def has_local(self) -> bool:
        return self.mode is not ModelMode.SHARED

    @property
    def has_global(self) -> bool:
        return self.mode is not ModelMode.SINGLE

    @model_validator(mode="after")
    def check_heads(self) -> Self:
        if self.dim % self.encoder.heads:
            raise ValueError(
                f"Model dimension {self.dim} is not divisible "
                f"by {self.encoder.heads} heads."
            )
        return self


class TrainConfig(ConfigBaseModel):
    learning_rate: PositiveFloat = DEFAULT_LEARNING_RATE
    beta1: Annotated[float, Field(ge=0.0, lt=1.0)] = 0.9
    beta2: Annotated[float, Field(ge=0.0, lt=1.0)] = 0.999
    eps: PositiveFloat = 1e-8
    lambda_a: Annotated[float, Field(ge=0.0)] = 1e-5
    lambda_b: Annotated[float, Field(ge=0.0)] = 1e-5
    batch_size: PositiveInt = 128
    eval_batch_size: PositiveInt = 2048
    max_epochs: NonNegativeInt = 20
    patience: PositiveInt = 2
    seed: int = 0
    update_mode: UpdateMode = UpdateMode.JOINT
    train_negatives: PositiveInt = DEFAULT_TRAIN_NEGATIVES
    eval_negatives: PositiveInt = DEFAULT_EVAL_NEGATIVES
    early_stop_metric: Literal["auc", "gauc", "mrr", "ndcg@10"] = "auc"


class DataConfig(ConfigBaseModel):
    input_a: Path | None = None
    input_b: Path | None = None
    # A directory written by `man-rec prepare`; used instead of the raw inputs.
    prepared: Path | None = None
    # Ground-truth `user_id \t group_id` file, synthetic data only.
    groups: Path | None = None
    k_core: PositiveInt = 1
    val_boundary: NonNegativeInt | None = None
    test_boundary: NonNegativeInt | None = None

    @model_validator(mode="after")
    def check_sources(self) -> Self:
        if self.prepared is None and (self.input_a is None or self.input_b is None):
            raise ValueError("Set either `prepared` or both `input_a` and `input_b`.")
        if (
            self.val_boundary is not None
            and self.test_boundary is not None
            and self.val_boundary >= self.test_boundary
        ):
            raise ValueError("val_boundary must be earlier than test_boundary.")
        return self


class RunConfig(ConfigBaseModel):
    data: DataConfig
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()

    def with_seed(self, seed: int) -> RunConfig:
        return self.model_copy(
            update={"train": self.train.model_copy(update={"seed": seed})}
        )

    def with_model(self, **changes: object) -> RunConfig:
        model = ModelConfig.model_validate(self.model.model_dump() | changes)
        return self.model_copy(update={"model": model})
