"""AUC, user-weighted GAUC, MRR and NDCG@k.

Ranks are pessimistic: a positive is ranked after every negative with an equal score.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from sklearn.metrics import roc_auc_score

from man_rec.constants import DEFAULT_NDCG_CUTOFF
from man_rec.numerics.tensor import Array, IndexArray


@dataclass(frozen=True)
class ScoredExamples:
    """Model scores for a set of examples.

    ``groups`` holds the candidate set of each example (one positive plus its sampled
    negatives); negative ids are ignored by the ranking metrics.
    """

    user_ids: tuple[str, ...]
    scores: Array
    labels: Array
    groups: IndexArray

    def __post_init__(self) -> None:
        fields = (self.user_ids, self.scores, self.labels, self.groups)
        sizes = {len(values) for values in fields}
        if len(sizes) != 1:
            raise ValueError("Scored example fields must all have the same length.")


def _partition(keys: npt.NDArray[np.generic]) -> list[IndexArray]:
    """Row indices grouped by key, keys in sorted order and rows in input order."""
    if keys.size == 0:
        return []
    _, inverse = np.unique(keys, return_inverse=True)
    order = np.argsort(inverse, kind="stable")
    bounds = np.flatnonzero(np.diff(inverse[order])) + 1
    return np.split(order, bounds)


def _check_binary(labels: Array) -> None:
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("Labels must be 0 or 1.")


def auc(labels: npt.ArrayLike, scores: npt.ArrayLike) -> float:
    """P(positive scores above negative) plus half the probability of a tie."""
    y = np.asarray(labels, dtype=np.float64)
    s = np.asarray(scores, dtype=np.float64)
    _check_binary(y)
    if y.size == 0 or y.min() == y.max():
        raise ValueError("AUC needs at least one positive and one negative example.")
    return float(roc_auc_score(y, s))


def gauc(
    user_ids: Sequence[str], labels: npt.ArrayLike, scores: npt.ArrayLike
) -> float:
    """Per-user AUC averaged with each user's positive count as weight.

    Users without both a positive and a negative are skipped.
    """
    y = np.asarray(labels, dtype=np.float64)
    s = np.asarray(scores, dtype=np.float64)
    weighted = total = 0.0
    for rows in _partition(np.asarray(user_ids, dtype=str)):
        user_labels = y[rows]
        positives = float(user_labels.sum())
        if positives == 0 or positives == user_labels.size:
            continue
        weighted += positives * auc(user_labels, s[rows])
        total += positives
    if total == 0:
        raise ValueError("GAUC needs at least one user with both classes.")
    return weighted / total


def candidate_ranks(
    groups: npt.ArrayLike, labels: npt.ArrayLike, scores: npt.ArrayLike
) -> IndexArray:
    """1-based rank of the positive in each candidate set, ties against it."""
    g = np.asarray(groups, dtype=np.int64)
    y = np.asarray(labels, dtype=np.float64)
    s = np.asarray(scores, dtype=np.float64)
    ranks = []
    ranked = np.flatnonzero(g >= 0)
    for part in _partition(g[ranked]):
        rows = ranked[part]
        group = g[rows[0]]
        set_labels, set_scores = y[rows], s[rows]
        positive = np.flatnonzero(set_labels == 1)
        if positive.size != 1:
            raise ValueError(
                f"Candidate set {group} has {positive.size} positives, "
                "expected exactly 1."
            )
        score = set_scores[positive[0]]
        above = (set_labels == 0) & (set_scores >= score)
        ranks.append(1 + int(np.count_nonzero(above)))
    if not ranks:
        raise ValueError("Ranking metrics need at least one candidate set.")
    return np.array(ranks, dtype=np.int64)


def mrr(groups: npt.ArrayLike, labels: npt.ArrayLike, scores: npt.ArrayLike) -> float:
    ranks = candidate_ranks(groups, labels, scores)
    return float(np.mean(1.0 / ranks))


def ndcg_at_k(
    groups: npt.ArrayLike,
    labels: npt.ArrayLike,
    scores: npt.ArrayLike,
    k: int = DEFAULT_NDCG_CUTOFF,
) -> float:
    """Binary relevance with one positive per set, so the ideal DCG is 1."""
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}.")
    ranks = candidate_ranks(groups, labels, scores)
    gains = np.where(ranks <= k, 1.0 / np.log2(1.0 + ranks), 0.0)
    return float(np.mean(gains))


def compute_metrics(
    scored: ScoredExamples, k: int = DEFAULT_NDCG_CUTOFF
) -> dict[str, float]:
    return {
        "auc": auc(scored.labels, scored.scores),
        "gauc": gauc(scored.user_ids, scored.labels, scored.scores),
        "mrr": mrr(scored.groups, scored.labels, scored.scores),
        f"ndcg@{k}": ndcg_at_k(scored.groups, scored.labels, scored.scores, k),
    }
