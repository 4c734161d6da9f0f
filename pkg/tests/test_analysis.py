import math

import numpy as np
import pytest

from m2e.analysis import (
    AnalysisError,
    _calibrated_affinities,
    cosine_cluster_stats,
    effective_map,
    five_number_summary,
    spectrum_report,
    tsne,
    tsne_kl,
    vizprep,
)
from m2e.embio import EmbeddingSet
from m2e.model import Layer, ProjectionConfig, ProjectionModel
from m2e.rng import Rng
from m2e.sentence_clusters import group_by_cluster, load_sentence_clusters


def model_from(layers, d):
    cfg = ProjectionConfig(d_in=d, d_out=d, n_layers=len(layers) if len(layers) in (1, 2, 4) else 2)
    return ProjectionModel(config=cfg, layers=layers)


# --- effective map folding, checked against direct forward evaluation ---


def test_effective_map_single_layer():
    w = Rng(0).normals(4, 4)
    b = Rng(1).normals(4)
    model = model_from([Layer(w=w, b=b, skip=False)], 4)
    w_eff, b_eff = effective_map(model)
    assert np.array_equal(w_eff, w)
    assert np.array_equal(b_eff, b)


def test_effective_map_matches_forward():
    r = Rng(7)
    layers = [
        Layer(w=r.normals(4, 4), b=r.normals(4), skip=False),
        Layer(w=r.normals(4, 4), b=r.normals(4), skip=True),
        Layer(w=r.normals(4, 4), b=r.normals(4), skip=False),
        Layer(w=r.normals(4, 4), b=r.normals(4), skip=True),
    ]
    model = model_from(layers, 4)
    w_eff, b_eff = effective_map(model)
    x = r.normals(5, 4)
    from m2e.model import forward

    y, _ = forward(model, x)
    assert np.allclose(x @ w_eff.T + b_eff, y, atol=1e-12)


def test_effective_map_skip_is_identity_plus_w():
    w = np.zeros((3, 3))
    model = model_from([Layer(w=w, b=np.zeros(3), skip=True)], 3)
    w_eff, _ = effective_map(model)
    assert np.array_equal(w_eff, np.eye(3))


# --- spectral report ---


def random_orthogonal(d, seed):
    q, r = np.linalg.qr(Rng(seed).normals(d, d))
    return q * np.sign(np.diag(r))


def test_spectrum_orthogonal_map():
    q = random_orthogonal(16, 3)
    rep = spectrum_report(q, np.zeros(16))
    assert rep.orth_deviation < 1e-10
    assert rep.eff_rank_threshold == 16
    assert abs(rep.eff_rank_entropy - 16.0) < 1e-8
    assert rep.bias_norm == 0.0
    assert np.allclose(rep.singular_values, 1.0, atol=1e-12)


def test_spectrum_known_diagonal():
    w = np.diag([4.0, 2.0, 1.0, 0.02])
    rep = spectrum_report(w, np.array([3.0, 4.0, 0.0, 0.0]))
    assert np.allclose(rep.singular_values, [4.0, 2.0, 1.0, 0.02], atol=1e-12)
    # tau * s_max = 0.04 > 0.02, so the smallest value drops out
    assert rep.eff_rank_threshold == 3
    p = np.array([4.0, 2.0, 1.0, 0.02]) / 7.02
    expected_ent = math.exp(-np.sum(p * np.log(p)))
    assert abs(rep.eff_rank_entropy - expected_ent) < 1e-10
    assert abs(rep.bias_norm - 5.0) < 1e-12


def test_spectrum_low_rank():
    r = Rng(11)
    u = random_orthogonal(12, 4)[:, :5]
    v = random_orthogonal(12, 5)[:, :5]
    w = u @ np.diag([5.0, 4.0, 3.0, 2.0, 1.0]) @ v.T
    rep = spectrum_report(w, np.zeros(12))
    assert rep.eff_rank_threshold == 5
    assert np.allclose(rep.singular_values[:5], [5, 4, 3, 2, 1], atol=1e-9)
    assert np.all(rep.singular_values[5:] < 1e-9)


def test_spectrum_rectangular_map():
    r = Rng(13)
    w = r.normals(8, 5)
    rep = spectrum_report(w, np.zeros(5))
    ref = np.linalg.svd(w, compute_uv=False)
    assert np.allclose(rep.singular_values, ref, atol=1e-9)


# --- cosine cluster stats ---


def test_five_number_summary_linear_interp():
    s = five_number_summary(np.array([1.0, 2.0, 3.0, 4.0]))
    assert s == {"min": 1.0, "q1": 1.75, "median": 2.5, "q3": 3.25, "max": 4.0}


def test_cluster_stats_known_angles():
    # three unit vectors pairwise 60 degrees apart: all cosine distances 0.5
    v = np.array(
        [
            [1.0, 0.0, 0.0],
            [0.5, math.sqrt(3) / 2, 0.0],
            [0.5, math.sqrt(3) / 6, math.sqrt(6) / 3],
        ]
    )
    assert np.allclose(v @ v.T - np.eye(3) * 0.5, 0.5, atol=1e-12)
    es = EmbeddingSet(vectors=v.astype(np.float32), ids=["a", "b", "c"], lang="en")
    rep = cosine_cluster_stats({"text": [("angles", es)]})
    stats = rep.stats["text"]["angles"]
    assert stats["pairs"] == 3
    for key in ("min", "median", "max"):
        assert abs(stats[key] - 0.5) < 1e-6


def test_cluster_stats_scale_invariant():
    vecs = Rng(5).normals(6, 8).astype(np.float32)
    a = EmbeddingSet(vectors=vecs, ids=list("abcdef"), lang="en")
    b = EmbeddingSet(vectors=vecs * 7.5, ids=list("abcdef"), lang="en")
    ra = cosine_cluster_stats({"f": [("c", a)]})
    rb = cosine_cluster_stats({"f": [("c", b)]})
    for key in ("min", "q1", "median", "q3", "max"):
        assert abs(ra.stats["f"]["c"][key] - rb.stats["f"]["c"][key]) < 1e-6


def test_cluster_stats_rejects_singleton():
    es = EmbeddingSet(vectors=np.ones((1, 4), dtype=np.float32), ids=["a"], lang="en")
    with pytest.raises(AnalysisError):
        cosine_cluster_stats({"f": [("solo", es)]})


def test_sentence_cluster_fixture_shape():
    clusters = load_sentence_clusters()
    assert len(clusters) == 8
    for name, sentences in clusters:
        assert len(sentences) == 5
        assert all(s.strip() for s in sentences)


def test_group_by_cluster_splits_ids():
    ids = ["dog#0", "dog#1", "cat#0"]
    es = EmbeddingSet(vectors=np.eye(3, dtype=np.float32), ids=ids, lang="en")
    groups = dict(group_by_cluster(es))
    assert sorted(groups) == ["cat", "dog"]
    assert groups["dog"].n == 2
    assert groups["cat"].ids == ["cat#0"]


# --- vizprep ---


def three_blob_gallery(per=30, seed=2):
    r = Rng(seed)
    centers = np.array([[10.0, 0.0], [-10.0, 0.0], [0.0, 17.0]])
    rows, ids = [], []
    for ci, c in enumerate(centers):
        for j in range(per):
            rows.append(c + r.normals(2) * 0.3)
            ids.append(f"b{ci}-{j}")
    return EmbeddingSet(vectors=np.array(rows, dtype=np.float32), ids=ids, lang="en")


def test_vizprep_three_blobs():
    gallery = three_blob_gallery()
    fam = EmbeddingSet(vectors=gallery.vectors.copy(), ids=list(gallery.ids), lang="en")
    out = vizprep(gallery, {"media": fam}, k=3, top_n=3, select=3, per_cluster=5, seed=1)
    assert len(out.selected_clusters) == 3
    assert len(out.ids) == 15
    # every sampled point stays inside its blob
    for gid, label in zip(out.ids, out.cluster_labels):
        blob = gid.split("-")[0]
        peers = [g for g, l in zip(out.ids, out.cluster_labels) if l == label]
        assert all(p.split("-")[0] == blob for p in peers)


def test_vizprep_deterministic():
    gallery = three_blob_gallery()
    fam = {"f": EmbeddingSet(vectors=gallery.vectors.copy(), ids=list(gallery.ids), lang="en")}
    a = vizprep(gallery, fam, k=3, top_n=3, select=2, per_cluster=4, seed=9)
    b = vizprep(gallery, fam, k=3, top_n=3, select=2, per_cluster=4, seed=9)
    assert a.ids == b.ids
    assert a.cluster_labels == b.cluster_labels
    assert a.selected_clusters == b.selected_clusters


def test_vizprep_min_size_error():
    gallery = three_blob_gallery(per=2)
    fam = {"f": gallery}
    with pytest.raises(AnalysisError):
        vizprep(gallery, fam, k=3, top_n=3, select=3, per_cluster=2, min_cluster_size=3)


def test_vizprep_select_exceeds_top_n():
    gallery = three_blob_gallery()
    with pytest.raises(AnalysisError):
        vizprep(gallery, {"f": gallery}, k=3, top_n=2, select=3)


def test_vizprep_multi_family_join():
    gallery = three_blob_gallery(per=10)
    f1 = EmbeddingSet(vectors=gallery.vectors.copy(), ids=list(gallery.ids), lang="en")
    f2 = EmbeddingSet(vectors=gallery.vectors.copy(), ids=list(gallery.ids), lang="de")
    out = vizprep(gallery, {"a": f1, "b": f2}, k=3, top_n=3, select=3, per_cluster=4, seed=0)
    assert len(out.ids) == 24  # 3 clusters x 4 samples x 2 families
    assert out.families.count("a") == 12
    assert out.families.count("b") == 12


# --- t-SNE ---


def brute_force_joint_p(points, betas):
    """Direct two-loop construction of the symmetrized affinities."""
    n = len(points)
    p_cond = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                p_cond[i, j] = math.exp(-np.sum((points[i] - points[j]) ** 2) * betas[i])
        p_cond[i] /= p_cond[i].sum()
    return (p_cond + p_cond.T) / (2 * n)


def test_affinities_symmetric_and_normalized():
    points = Rng(3).normals(40, 5)
    p = _calibrated_affinities(points, perplexity=10.0)
    assert np.allclose(p, p.T, atol=1e-15)
    assert abs(p.sum() - 1.0) < 1e-12
    assert np.all(np.diag(p) == 0.0)


def test_affinity_perplexity_calibration():
    points = Rng(4).normals(60, 4)
    p = _calibrated_affinities(points, perplexity=12.0)
    # recover each conditional from the joint and check its perplexity
    n = 60
    p_cond_sym = p * 2 * n  # p_{j|i} + p_{i|j}
    for i in range(0, n, 7):
        # re-derive the row directly instead of unsymmetrizing
        d2 = np.sum((points - points[i]) ** 2, axis=1)
        d2 = np.delete(d2, i)
        # binary search the bandwidth the same way and confirm entropy target
        from m2e.analysis import _conditional_probs

        lo, hi, beta = 0.0, np.inf, 1.0
        for _ in range(200):
            row, h = _conditional_probs(d2, beta)
            if abs(h - math.log2(12.0)) < 1e-6:
                break
            if h > math.log2(12.0):
                lo = beta
                beta = beta * 2 if hi == np.inf else (beta + hi) / 2
            else:
                hi = beta
                beta = (lo + beta) / 2
        assert abs(2.0 ** h - 12.0) < 1e-3


def test_tsne_kl_decreases():
    points = np.vstack(
        [Rng(1).normals(30, 6) + 8.0, Rng(2).normals(30, 6) - 8.0]
    )
    y0 = tsne(points, perplexity=10.0, seed=0, iters=30)
    y1 = tsne(points, perplexity=10.0, seed=0, iters=400)
    assert tsne_kl(points, y1, 10.0) < tsne_kl(points, y0, 10.0)


def test_tsne_duplicates_colocate():
    r = Rng(6)
    centers = r.normals(10, 16) * 10
    points = np.vstack([centers[i] + r.normals(20, 16) for i in range(10)])
    points[40] = points[41]  # duplicate pairs inside clusters
    points[150] = points[151]
    y = tsne(points, perplexity=32.0, seed=1, iters=1000)
    assert np.linalg.norm(y[40] - y[41]) < 1e-3
    assert np.linalg.norm(y[150] - y[151]) < 1e-3


def test_tsne_infeasible_perplexity():
    with pytest.raises(AnalysisError):
        tsne(Rng(0).normals(20, 3), perplexity=10.0)


def test_tsne_deterministic():
    points = Rng(8).normals(40, 3)
    a = tsne(points, perplexity=8.0, seed=5, iters=50)
    b = tsne(points, perplexity=8.0, seed=5, iters=50)
    assert np.array_equal(a, b)
