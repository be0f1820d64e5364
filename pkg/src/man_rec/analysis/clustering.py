from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy.optimize import linear_sum_assignment
from sklearn.cluster import KMeans
from sklearn.decomposition import PCA
from sklearn.metrics.cluster import contingency_matrix

from man_rec.errors import ShapeError
from man_rec.numerics.tensor import Array, IndexArray

# Loadings smaller than this count as zero for the sign convention.
_LOADING_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Clustering:
    assignments: IndexArray
    centroids: Array
    inertia: float


@dataclass(frozen=True)
class Projection:
    coordinates: Array
    explained_variance: Array


def _matrix(vectors: npt.ArrayLike) -> Array:
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"Expected one vector per row, got shape {x.shape}.")
    return x


def kmeans(
    vectors: npt.ArrayLike, k: int, seed: int = 0, max_iter: int = 300
) -> Clustering:
    """Lloyd's algorithm from a single k-means++ seeding."""
    x = _matrix(vectors)
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}.")
    if k > len(x):
        raise ValueError(f"Cannot form {k} clusters from {len(x)} rows.")
    model = KMeans(
        n_clusters=k,
        init="k-means++",
        n_init=1,
        max_iter=max_iter,
        random_state=seed,
        algorithm="lloyd",
    ).fit(x)
    return Clustering(
        assignments=model.labels_.astype(np.int64),
        centroids=np.asarray(model.cluster_centers_, dtype=np.float64),
        inertia=float(model.inertia_),
    )


def pca_2d(vectors: npt.ArrayLike) -> Projection:
    """Project onto the top two principal axes.

    Each axis is oriented so that its first non-zero loading is positive. Data with a
    single feature gets a zero second coordinate.
    """
    x = _matrix(vectors)
    if len(x) < 2:
        raise ValueError(f"PCA needs at least 2 rows, got {len(x)}.")
    if not np.any(np.abs(x - x.mean(axis=0)) > 0):
        raise ValueError("PCA of identical rows: the data has rank 0.")

    n_components = min(2, x.shape[1])
    pca = PCA(n_components=n_components, svd_solver="full").fit(x)
    coordinates = pca.transform(x)
    for axis, loadings in enumerate(pca.components_):
        nonzero = np.flatnonzero(np.abs(loadings) > _LOADING_TOLERANCE)
        if nonzero.size and loadings[nonzero[0]] < 0:
            coordinates[:, axis] *= -1.0
    variance = np.asarray(pca.explained_variance_, dtype=np.float64)
    if n_components < 2:
        coordinates = np.hstack([coordinates, np.zeros((len(x), 1))])
        variance = np.append(variance, 0.0)
    return Projection(coordinates=coordinates, explained_variance=variance)


def group_alignment_score(
    assignments: npt.ArrayLike, ground_truth: npt.ArrayLike
) -> float:
    """Share of rows whose cluster maps to their true group under the best one-to-one
    matching of cluster ids to group ids."""
    predicted = np.asarray(assignments)
    truth = np.asarray(ground_truth)
    if predicted.shape != truth.shape or predicted.ndim != 1:
        raise ValueError(
            f"Assignments {predicted.shape} and ground truth {truth.shape} must be "
            "vectors of the same length."
        )
    if predicted.size == 0:
        raise ValueError("Cannot score an empty assignment.")
    table = contingency_matrix(truth, predicted)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / predicted.size)
