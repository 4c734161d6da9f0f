"""KMeans (Lloyd's with k-means++ seeding) and greedy farthest-cluster selection."""

from __future__ import annotations

import numpy as np

from .rng import Rng


class ClusteringError(ValueError):
    pass


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, points x centers."""
    p2 = np.einsum("ij,ij->i", points, points)
    c2 = np.einsum("ij,ij->i", centers, centers)
    d = p2[:, None] + c2[None, :] - 2.0 * (points @ centers.T)
    np.maximum(d, 0.0, out=d)
    return d


def kmeans_pp_init(points: np.ndarray, k: int, rng: Rng) -> np.ndarray:
    """k-means++ seeding: first center uniform, then D^2-weighted draws."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.randbelow(n)]
    d2 = _sq_dists(points, centers[:1])[:, 0]
    for j in range(1, k):
        if d2.sum() <= 0.0:
            centers[j] = points[rng.randbelow(n)]
        else:
            centers[j] = points[rng.choice_weighted(d2)]
        d2 = np.minimum(d2, _sq_dists(points, centers[j : j + 1])[:, 0])
    return centers


def kmeans(
    points: np.ndarray, k: int, seed: int, max_iter: int = 100
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lloyd's algorithm. Returns (assignments, centroids, sizes).

    Converges when no assignment changes; an emptied cluster is re-seeded to
    the point farthest from that cluster's previous centroid.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if k > n:
        raise ClusteringError(f"k={k} exceeds number of points n={n}")
    if max_iter < 1:
        raise ClusteringError("max_iter must be >= 1")
    rng = Rng(seed)
    centroids = kmeans_pp_init(points, k, rng)
    assignments = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        new_assign = np.argmin(_sq_dists(points, centroids), axis=1)
        if np.array_equal(new_assign, assignments):
            break
        assignments = new_assign
        for j in range(k):
            members = points[assignments == j]
            if members.shape[0] == 0:
                far = np.argmax(_sq_dists(points, centroids[j : j + 1])[:, 0])
                centroids[j] = points[far]
            else:
                centroids[j] = members.mean(axis=0)
    sizes = np.bincount(assignments, minlength=k).astype(np.int64)
    return assignments, centroids, sizes


def inertia(points: np.ndarray, assignments: np.ndarray, centroids: np.ndarray) -> float:
    diffs = points - centroids[assignments]
    return float(np.einsum("ij,ij->", diffs, diffs))


def farthest_cluster_selection(
    centroids: np.ndarray, candidate_ids: list[int], sizes: np.ndarray, m: int
) -> list[int]:
    """Greedy farthest-point traversal over centroids restricted to candidates.

    First pick is the candidate with the largest cluster size; each later pick
    maximizes the minimum Euclidean distance to everything already picked.
    All ties break toward the lowest candidate id.
    """
    cands = sorted(candidate_ids)
    if m > len(cands):
        raise ClusteringError(f"cannot select {m} clusters from {len(cands)} candidates")
    sizes = np.asarray(sizes)
    first = max(cands, key=lambda c: (sizes[c], -c))
    picked = [first]
    remaining = [c for c in cands if c != first]
    min_dist = {
        c: float(np.linalg.norm(centroids[c] - centroids[first])) for c in remaining
    }
    while len(picked) < m:
        best = max(remaining, key=lambda c: (min_dist[c], -c))
        picked.append(best)
        remaining.remove(best)
        for c in remaining:
            d = float(np.linalg.norm(centroids[c] - centroids[best]))
            if d < min_dist[c]:
                min_dist[c] = d
    return picked
