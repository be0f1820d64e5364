from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass

from man_rec.data.sequences import SequenceBatch
from man_rec.models.config import Domain, ModelConfig
from man_rec.network.embeddings import (
    EmbeddingTable,
    embed_global,
    embed_local,
    embed_target,
    make_domain_embeddings,
    make_embedding_table,
)
from man_rec.network.encoders import Encoder, make_global_encoder, make_local_encoders
from man_rec.network.layers import make_mlp
from man_rec.network.mixed_attention import (
    GroupPrototypeParams,
    ItemSimilarityParams,
    SequenceFusionParams,
    disentangle_loss,
    group_aggregate,
    group_pool,
    group_weight,
    item_similarity_scores,
    item_similarity_weight,
    make_group_prototype,
    make_item_similarity,
    make_sequence_fusion,
    sequence_fusion,
)
from man_rec.network.parameters import ParameterStore
from man_rec.network.prediction import (
    LossBreakdown,
    domain_loss,
    pool_representations,
    predict,
    single_domain_loss,
    total_loss,
)
from man_rec.numerics.functional import DenseLayer
from man_rec.numerics.tensor import Array, Tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DomainBranch:
    """Everything one domain owns."""

    embedding: EmbeddingTable | None
    domain_embedding: Tensor
    encoder: Encoder | None
    similarity: ItemSimilarityParams | None
    fusion: SequenceFusionParams | None
    prototype: GroupPrototypeParams | None
    head: list[DenseLayer] | None


@dataclass(frozen=True)
class MixedAttentionOutput:
    """Unpooled per-position outputs of one forward pass; disabled parts stay None."""

    similarity: Tensor | None = None
    fusion: Tensor | None = None
    group: Tensor | None = None
    local: Tensor | None = None
    global_: Tensor | None = None
    target_local: Tensor | None = None
    target_global: Tensor | None = None


@dataclass(frozen=True)
class DomainOutput:
    probabilities: Tensor
    # Pooled group representation per example, present when group attention is on.
    group_representation: Tensor | None = None


class MixedAttentionNetwork:
    """Two-domain sequential recommender with local, global and mixed attention paths.

    ``config.mode`` decides which parameters exist: ``single`` builds only the local
    paths, ``shared`` only the global path, ``cross`` both plus the enabled attention
    components. Parameters of one domain never enter the other domain's forward pass.
    """

    def __init__(
        self,
        config: ModelConfig,
        item_counts: Mapping[Domain, int],
        global_item_count: int,
        seed: int = 0,
    ) -> None:
        self.config = config
        self.item_counts = dict(item_counts)
        self.global_item_count = global_item_count
        self.store = ParameterStore(seed)

        dim = config.dim
        store = self.store
        domain_embeddings = make_domain_embeddings(store, config.resolved_domain_dim)

        self.global_embedding: EmbeddingTable | None = None
        self.global_encoder: Encoder | None = None
        self.global_head: list[DenseLayer] | None = None
        self.prototypes: Tensor | None = None
        if config.has_global:
            self.global_embedding = make_embedding_table(
                store,
                "shared.embedding",
                global_item_count + 1,
                config.max_len,
                config.item_dim,
            )
            self.global_encoder = make_global_encoder(store, config.encoder, dim)
            self.global_head = make_mlp(
                store, "shared.head", (2 * dim, *config.head_layers, 1)
            )
        if config.uses_gpa:
            self.prototypes = store.add("shared.gpa.prototypes", (config.n_groups, dim))

        local_encoders: dict[Domain, Encoder] = {}
        if config.has_local:
            local_encoders = dict(
                zip(Domain, make_local_encoders(store, config.encoder, dim))
            )

        self.branches: dict[Domain, DomainBranch] = {}
        for domain in Domain:
            prefix = domain.value
            local_inputs = 2 + sum((config.uses_isa, config.uses_sfa, config.uses_gpa))
            self.branches[domain] = DomainBranch(
                embedding=(
                    make_embedding_table(
                        store,
                        f"{prefix}.embedding",
                        item_counts[domain] + 1,
                        config.max_len,
                        config.item_dim,
                    )
                    if config.has_local
                    else None
                ),
                domain_embedding=domain_embeddings[domain],
                encoder=local_encoders.get(domain),
                similarity=(
                    make_item_similarity(store, f"{prefix}.isa", dim, config.isa_layers)
                    if config.uses_isa
                    else None
                ),
                fusion=(
                    make_sequence_fusion(store, f"{prefix}.sfa", dim)
                    if config.uses_sfa
                    else None
                ),
                prototype=(
                    make_group_prototype(
                        store,
                        f"{prefix}.gpa",
                        dim,
                        config.n_groups,
                        config.max_len,
                        config.isa_layers,
                    )
                    if config.uses_gpa
                    else None
                ),
                head=(
                    make_mlp(
                        store,
                        f"{prefix}.head",
                        (local_inputs * dim, *config.head_layers, 1),
                    )
                    if config.has_local
                    else None
                ),
            )
        logger.debug("Built %r in %s mode", self.store, config.mode.value)

    def components(self, batch: SequenceBatch) -> MixedAttentionOutput:
        config = self.config
        branch = self.branches[batch.domain]
        mask = batch.mask
        stop = config.stop_gradient

        local_seq = local_out = target_local = None
        if branch.embedding is not None and branch.encoder is not None:
            local_seq = embed_local(
                branch.embedding, branch.domain_embedding, batch.histories
            )
            local_out = branch.encoder(local_seq, mask)
            target_local = embed_target(
                branch.embedding, branch.domain_embedding, batch.targets
            )

        global_seq = global_out = target_global = None
        if self.global_embedding is not None and self.global_encoder is not None:
            global_seq = embed_global(
                self.global_embedding, branch.domain_embedding, batch.global_histories
            )
            global_out = self.global_encoder(global_seq, mask)
            target_global = embed_target(
                self.global_embedding, branch.domain_embedding, batch.global_targets
            )

        similarity = fusion = group = None
        if branch.similarity is not None:
            assert local_seq is not None and global_seq is not None
            assert target_global is not None
            scores = item_similarity_scores(
                target_global, local_seq, global_seq, mask, branch.similarity
            )
            similarity = item_similarity_weight(scores, local_seq, global_seq, mask)
        if branch.fusion is not None:
            assert local_out is not None and global_out is not None
            fusion = sequence_fusion(
                local_out, global_out, mask, branch.fusion, stop=stop
            )
        if branch.prototype is not None:
            assert local_out is not None and self.prototypes is not None
            relevance = group_pool(local_out, mask, branch.prototype, stop=stop)
            aggregated = group_aggregate(
                self.prototypes, local_out, mask, branch.prototype, stop=stop
            )
            group = group_weight(relevance, aggregated)

        return MixedAttentionOutput(
            similarity=similarity,
            fusion=fusion,
            group=group,
            local=local_out,
            global_=global_out,
            target_local=target_local,
            target_global=target_global,
        )

    def forward(self, batch: SequenceBatch) -> DomainOutput:
        out = self.components(batch)
        inputs = pool_representations(
            batch.mask,
            similarity=out.similarity,
            fusion=out.fusion,
            group=out.group,
            local=out.local,
            global_=out.global_,
            target_local=out.target_local,
            target_global=out.target_global,
            mean=self.config.mean_pooling,
        )
        branch = self.branches[batch.domain]
        return DomainOutput(
            probabilities=predict(inputs, branch.head, self.global_head),
            group_representation=inputs.group,
        )

    def disentangle(self) -> Tensor | float:
        if self.prototypes is None:
            return 0.0
        return disentangle_loss(self.prototypes, self.config.lambda_g)

    def loss(
        self,
        batches: Mapping[Domain, SequenceBatch],
        lambda_a: float,
        lambda_b: float,
    ) -> LossBreakdown:
        """The joint objective for two batches, the single-domain one for one batch."""
        losses = {
            domain: domain_loss(self.forward(batch).probabilities, batch.labels)
            for domain, batch in batches.items()
        }
        if len(losses) == 2:
            return total_loss(
                losses[Domain.A],
                losses[Domain.B],
                self.store,
                lambda_a,
                lambda_b,
                self.disentangle(),
            )
        if len(losses) == 1:
            domain, loss = next(iter(losses.items()))
            weight = lambda_a if domain is Domain.A else lambda_b
            return single_domain_loss(
                domain, loss, self.store, weight, self.disentangle()
            )
        raise ValueError("A loss needs at least one batch.")

    def scores(self, batch: SequenceBatch) -> Array:
        return self.forward(batch).probabilities.numpy()

    def group_representations(self, batch: SequenceBatch) -> Array:
        """Pooled group representation ``(batch, D)`` of every example."""
        out = self.forward(batch).group_representation
        if out is None:
            raise ValueError("Group representations need group-prototype attention.")
        return out.numpy()
