import itertools

import numpy as np
import pytest

from m2e.cluster import ClusteringError, farthest_cluster_selection, inertia, kmeans
from m2e.rng import Rng


def test_k_equals_n_zero_inertia():
    pts = Rng(1).normals(6, 3)
    assign, cents, sizes = kmeans(pts, 6, seed=0)
    assert sorted(assign.tolist()) == list(range(6))
    assert inertia(pts, assign, cents) < 1e-20
    assert sizes.tolist() == [1] * 6


def brute_force_best_2_labeling(pts):
    """Enumerate all 2-labelings (n <= 10) and return the minimal inertia."""
    n = pts.shape[0]
    best = np.inf
    for labels in itertools.product([0, 1], repeat=n):
        labels = np.array(labels)
        if labels.min() == labels.max():
            continue
        cost = 0.0
        for c in (0, 1):
            members = pts[labels == c]
            cost += ((members - members.mean(axis=0)) ** 2).sum()
        best = min(best, cost)
    return best


def test_two_blobs_perfect_separation():
    r = Rng(2)
    blob_a = r.normals(5, 2) * 0.1
    blob_b = r.normals(5, 2) * 0.1 + 100.0
    pts = np.vstack([blob_a, blob_b])
    assign, cents, sizes = kmeans(pts, 2, seed=3)
    assert len(set(assign[:5].tolist())) == 1
    assert len(set(assign[5:].tolist())) == 1
    assert assign[0] != assign[5]
    assert abs(inertia(pts, assign, cents) - brute_force_best_2_labeling(pts)) < 1e-9


def test_k_greater_than_n_errors():
    with pytest.raises(ClusteringError):
        kmeans(np.zeros((2, 2)), 3, seed=0)


def test_inertia_non_increasing_over_iterations():
    pts = Rng(4).normals(60, 4)
    prev = np.inf
    for iters in range(1, 8):
        assign, cents, _ = kmeans(pts, 5, seed=7, max_iter=iters)
        cur = inertia(pts, assign, cents)
        assert cur <= prev + 1e-9
        prev = cur


def test_kmeans_deterministic_per_seed():
    pts = Rng(5).normals(40, 3)
    a1 = kmeans(pts, 4, seed=11)
    a2 = kmeans(pts, 4, seed=11)
    assert np.array_equal(a1[0], a2[0])
    assert np.array_equal(a1[1], a2[1])


def greedy_farthest_oracle(centroids, cands, sizes, m):
    """Independent re-derivation using explicit min-distance scans."""
    picked = [max(sorted(cands), key=lambda c: (sizes[c], -c))]
    while len(picked) < m:
        best, best_d = None, -1.0
        for c in sorted(cands):
            if c in picked:
                continue
            d = min(np.linalg.norm(centroids[c] - centroids[p]) for p in picked)
            if d > best_d:
                best, best_d = c, d
        picked.append(best)
    return picked


def test_farthest_all_candidates_deterministic():
    cents = Rng(6).normals(5, 2)
    sizes = np.array([3, 1, 4, 1, 5])
    sel1 = farthest_cluster_selection(cents, [0, 1, 2, 3, 4], sizes, 5)
    sel2 = farthest_cluster_selection(cents, [4, 3, 2, 1, 0], sizes, 5)
    assert sel1 == sel2
    assert sorted(sel1) == [0, 1, 2, 3, 4]


def test_farthest_m1_is_largest_cluster():
    cents = np.zeros((4, 2))
    sizes = np.array([2, 9, 9, 1])
    assert farthest_cluster_selection(cents, [0, 1, 2, 3], sizes, 1) == [1]


def test_farthest_collinear_extremes_then_midpoint():
    # 5 collinear centroids; start at one end (largest size)
    cents = np.array([[0.0, 0], [1, 0], [2, 0], [3, 0], [4, 0]])
    sizes = np.array([10, 1, 1, 1, 1])
    sel = farthest_cluster_selection(cents, [0, 1, 2, 3, 4], sizes, 3)
    assert sel == [0, 4, 2]
    assert sel == greedy_farthest_oracle(cents, [0, 1, 2, 3, 4], sizes, 3)


def test_farthest_matches_oracle_random():
    r = Rng(8)
    cents = r.normals(12, 3)
    sizes = np.array([r.randbelow(50) + 1 for _ in range(12)])
    cands = [0, 2, 3, 5, 7, 8, 10, 11]
    got = farthest_cluster_selection(cents, cands, sizes, 5)
    assert got == greedy_farthest_oracle(cents, cands, sizes, 5)


def test_farthest_m_too_large_errors():
    with pytest.raises(ClusteringError):
        farthest_cluster_selection(np.zeros((3, 2)), [0, 1], np.array([1, 1, 1]), 3)
