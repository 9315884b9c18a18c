"""Seeded k-means over embedding vectors (k-means++ init, Lloyd iterations).

Runs on L2-normalized vectors with squared-Euclidean distance, which ranks
identically to cosine distance there. Fully deterministic for a fixed seed;
empty clusters are re-seeded from the point farthest from its centroid.
"""

from __future__ import annotations

from dataclasses import dataclass
from collections.abc import Sequence

import numpy as np


@dataclass(frozen=True)
class KMeansResult:
    k_effective: int
    assignments: np.ndarray          # shape (n,), cluster index per input vector
    centroids: np.ndarray            # shape (k_effective, dim)
    inertia: float
    iterations: int
    inertia_history: tuple[float, ...]

    def members(self, cluster: int) -> list[int]:
        return [i for i, a in enumerate(self.assignments) if a == cluster]


def _pairwise_sq_dist(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # ||x - c||^2 = ||x||^2 - 2 x.c + ||c||^2, computed batched
    x_sq = np.sum(points * points, axis=1, keepdims=True)
    c_sq = np.sum(centroids * centroids, axis=1)
    d2 = x_sq - 2.0 * (points @ centroids.T) + c_sq
    np.maximum(d2, 0.0, out=d2)
    return d2


def _kmeanspp_init(points: np.ndarray, k: int,
                   rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    min_d2 = _pairwise_sq_dist(points, points[chosen[-1]][None, :])[:, 0]
    while len(chosen) < k:
        total = float(min_d2.sum())
        if total <= 0.0:
            # All remaining mass sits on already-chosen points; k was clamped
            # to the distinct count, so this only happens at exact convergence.
            remaining = [i for i in range(n) if i not in set(chosen)]
            chosen.append(remaining[0])
        else:
            target = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(min_d2), target, side="right"))
            idx = min(idx, n - 1)
            chosen.append(idx)
        d2_new = _pairwise_sq_dist(points, points[chosen[-1]][None, :])[:, 0]
        np.minimum(min_d2, d2_new, out=min_d2)
    return points[chosen].copy()


def kmeans(vectors: Sequence[np.ndarray] | np.ndarray, k: int, seed: int,
           max_iter: int = 50) -> KMeansResult:
    """Cluster vectors into at most k groups; deterministic for a fixed seed."""
    if k <= 0:
        raise ValueError("k must be positive")
    points = np.asarray(vectors, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError("vectors must be a nonempty 2-D collection")

    n = points.shape[0]
    distinct = np.unique(points, axis=0).shape[0]
    k_eff = min(k, distinct)

    rng = np.random.Generator(np.random.PCG64(seed))
    centroids = _kmeanspp_init(points, k_eff, rng)

    history: list[float] = []
    prev: np.ndarray | None = None
    assignments = np.zeros(n, dtype=np.intp)
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        d2 = _pairwise_sq_dist(points, centroids)
        assignments = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(n), assignments].sum()))
        if prev is not None and np.array_equal(assignments, prev):
            break
        prev = assignments.copy()

        for j in range(k_eff):
            mask = assignments == j
            if mask.any():
                centroids[j] = points[mask].mean(axis=0)
        empty = [j for j in range(k_eff) if not (assignments == j).any()]
        if empty:
            dist_now = _pairwise_sq_dist(points, centroids)
            min_now = dist_now.min(axis=1)
            for j in empty:
                farthest = int(np.argmax(min_now))
                centroids[j] = points[farthest]
                min_now[farthest] = 0.0
    else:
        # Iteration budget exhausted; one final assignment restores the
        # nearest-centroid invariant against the last centroid update.
        d2 = _pairwise_sq_dist(points, centroids)
        assignments = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(n), assignments].sum()))

    return KMeansResult(
        k_effective=k_eff,
        assignments=assignments,
        centroids=centroids,
        inertia=history[-1],
        iterations=iterations,
        inertia_history=tuple(history),
    )
