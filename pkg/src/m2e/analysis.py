"""Diagnostics for the learned map: composed-map spectral report, pairwise
cosine-distance statistics over sentence-variation clusters, and the
visualization-prep pipeline (KMeans cluster selection + sampling + exact t-SNE).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cluster import ClusteringError, farthest_cluster_selection, kmeans
from .embio import EmbeddingSet
from .linalg import l2_normalize_rows, svd
from .model import ProjectionModel
from .rng import Rng, mix_seed


class AnalysisError(ValueError):
    pass


def effective_map(model: ProjectionModel) -> tuple[np.ndarray, np.ndarray]:
    """Fold the affine stack into a single (W_eff, b_eff).

    A skip layer contributes (I + W); biases accumulate through every layer
    that follows them.
    """
    d_in = model.config.d_in
    w_eff = np.eye(d_in)
    b_eff = np.zeros(d_in)
    for layer in model.layers:
        w = layer.w + np.eye(layer.w.shape[0]) if layer.skip else layer.w
        b_eff = w @ b_eff + layer.b
        w_eff = w @ w_eff
    return w_eff, b_eff


@dataclass
class WeightReport:
    singular_values: np.ndarray
    eff_rank_threshold: int
    eff_rank_entropy: float
    orth_deviation: float
    bias_norm: float
    tau: float

    def to_json(self) -> dict:
        return {
            "singular_values": [float(s) for s in self.singular_values],
            "eff_rank_threshold": self.eff_rank_threshold,
            "eff_rank_entropy": self.eff_rank_entropy,
            "orth_deviation": self.orth_deviation,
            "bias_norm": self.bias_norm,
            "tau": self.tau,
        }


def spectrum_report(w_eff: np.ndarray, b_eff: np.ndarray, tau: float = 0.01) -> WeightReport:
    """Singular spectrum plus two effective-rank summaries.

    Threshold rank counts singular values >= tau * s_max; entropy rank is
    exp of the Shannon entropy of the normalized spectrum. Rectangular maps
    are analyzed through the eigen-spectrum of the square Gram matrix W^T W.
    """
    w_eff = np.asarray(w_eff, dtype=np.float64)
    if w_eff.shape[0] == w_eff.shape[1]:
        s = svd(w_eff).s
    else:
        gram = w_eff.T @ w_eff
        s = np.sqrt(np.maximum(svd(gram).s, 0.0))
    s_max = s[0] if s.size else 0.0
    rank_thr = int(np.sum(s >= tau * s_max)) if s_max > 0 else 0
    total = s.sum()
    if total > 0:
        p = s[s > 0] / total
        rank_ent = float(np.exp(-np.sum(p * np.log(p))))
    else:
        rank_ent = 0.0
    gram = w_eff.T @ w_eff
    orth_dev = float(np.linalg.norm(gram - np.eye(gram.shape[0]), ord="fro"))
    return WeightReport(
        singular_values=s,
        eff_rank_threshold=rank_thr,
        eff_rank_entropy=rank_ent,
        orth_deviation=orth_dev,
        bias_norm=float(np.linalg.norm(np.asarray(b_eff, dtype=np.float64))),
        tau=tau,
    )


def five_number_summary(values: np.ndarray) -> dict[str, float]:
    """min/q1/median/q3/max with linearly interpolated quartiles."""
    q = np.percentile(np.asarray(values, dtype=np.float64), [0, 25, 50, 75, 100])
    return {"min": float(q[0]), "q1": float(q[1]), "median": float(q[2]), "q3": float(q[3]), "max": float(q[4])}


@dataclass
class ClusterDistanceReport:
    # family -> cluster name -> {summary..., "pairs": count}
    stats: dict[str, dict[str, dict]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return self.stats


def cosine_cluster_stats(
    families: dict[str, list[tuple[str, EmbeddingSet]]]
) -> ClusterDistanceReport:
    """Five-number summaries of pairwise cosine distances within each cluster,
    per embedding family. Rows are normalized internally; strict upper
    triangle only."""
    report = ClusterDistanceReport()
    for family, clusters in families.items():
        report.stats[family] = {}
        for name, es in clusters:
            if es.n < 2:
                raise AnalysisError(f"cluster {name!r} in family {family!r} has < 2 rows")
            u = l2_normalize_rows(es.vectors.astype(np.float64))
            sims = u @ u.T
            iu = np.triu_indices(es.n, k=1)
            dists = 1.0 - sims[iu]
            summary = five_number_summary(dists)
            summary["pairs"] = int(dists.size)
            report.stats[family][name] = summary
    return report


@dataclass
class VizPrepOutput:
    ids: list[str]
    cluster_labels: list[int]
    families: list[str]
    coords: np.ndarray | None = None  # n x 2 when t-SNE was run
    selected_clusters: list[int] = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def vizprep(
    gallery: EmbeddingSet,
    text_families: dict[str, EmbeddingSet],
    k: int = 100,
    top_n: int = 50,
    select: int = 17,
    per_cluster: int = 10,
    min_cluster_size: int = 3,
    seed: int = 0,
    run_tsne: bool = False,
    perplexity: float = 32.0,
    tsne_iters: int = 1000,
) -> VizPrepOutput:
    """Cluster the gallery, pick spread-out clusters, subsample points, and
    join the text families on shared ids for the sampled instances."""
    if select > top_n:
        raise AnalysisError(f"select={select} exceeds top_n={top_n}")
    assignments, centroids, sizes = kmeans(gallery.vectors.astype(np.float64), k, seed)
    by_size = sorted(range(k), key=lambda c: (-sizes[c], c))[:top_n]
    candidates = [c for c in by_size if sizes[c] >= min_cluster_size]
    if len(candidates) < select:
        raise AnalysisError(
            f"only {len(candidates)} clusters of size >= {min_cluster_size} "
            f"among the {top_n} largest; need {select}"
        )
    chosen = farthest_cluster_selection(centroids, candidates, sizes, select)
    rng = Rng(mix_seed(seed, 1))
    ids: list[str] = []
    labels: list[int] = []
    fams: list[str] = []
    sampled_rows: list[tuple[int, int]] = []  # (gallery row, cluster)
    for c in chosen:
        members = np.where(assignments == c)[0]
        if members.size > per_cluster:
            members = members[rng.sample_indices(members.size, per_cluster)]
        for row in members:
            sampled_rows.append((int(row), c))
    vec_blocks: list[np.ndarray] = []
    for row, c in sampled_rows:
        gid = gallery.ids[row]
        for fam_name, fam in text_families.items():
            try:
                fr = fam.ids.index(gid)
            except ValueError:
                continue
            ids.append(gid)
            labels.append(c)
            fams.append(fam_name)
            vec_blocks.append(fam.vectors[fr].astype(np.float64))
    out = VizPrepOutput(
        ids=ids,
        cluster_labels=labels,
        families=fams,
        selected_clusters=chosen,
        meta={
            "k": k,
            "top_n": top_n,
            "select": select,
            "per_cluster": per_cluster,
            "min_cluster_size": min_cluster_size,
            "seed": seed,
        },
    )
    if run_tsne and vec_blocks:
        out.coords = tsne(np.vstack(vec_blocks), perplexity=perplexity, seed=seed, iters=tsne_iters)
        out.meta.update({"perplexity": perplexity, "tsne_iters": tsne_iters})
    return out


# ---------------------------------------------------------------------------
# Exact t-SNE


def _conditional_probs(d2_row: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    """Gaussian conditional distribution for one point and its base-2 entropy."""
    p = np.exp(-(d2_row - d2_row.min()) * beta)  # shift avoids total underflow
    total = p.sum()
    if total <= 0:
        return np.zeros_like(p), 0.0
    p /= total
    nz = p > 0
    h = float(-np.sum(p[nz] * np.log2(p[nz])))
    return p, h


def conditional_affinities(points: np.ndarray, perplexity: float, tol: float = 1e-6) -> np.ndarray:
    """Row-stochastic matrix of Gaussian conditionals p_{j|i}, each row's
    bandwidth binary-searched so its entropy is log2(perplexity) within tol."""
    n = points.shape[0]
    sq = np.einsum("ij,ij->i", points, points)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (points @ points.T)
    np.maximum(d2, 0.0, out=d2)
    target = math.log2(perplexity)
    p_cond = np.zeros((n, n))
    for i in range(n):
        row = np.delete(d2[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        for _ in range(200):
            p, h = _conditional_probs(row, beta)
            if abs(h - target) < tol:
                break
            if h > target:  # too flat: tighten
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (lo + beta) / 2.0
        p_cond[i, np.arange(n) != i] = p
    return p_cond


def _calibrated_affinities(points: np.ndarray, perplexity: float, tol: float = 1e-6) -> np.ndarray:
    """Symmetrized joint affinities p_ij = (p_{j|i} + p_{i|j}) / (2n)."""
    p_cond = conditional_affinities(points, perplexity, tol)
    return (p_cond + p_cond.T) / (2.0 * points.shape[0])


def _kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / np.maximum(q[mask], 1e-300))))


def tsne(
    points: np.ndarray,
    perplexity: float = 32.0,
    seed: int = 0,
    iters: int = 1000,
) -> np.ndarray:
    """Exact O(n^2) t-SNE to 2D.

    Student-t(1) low-dimensional kernel; early exaggeration x12 for the first
    250 iterations; learning rate 200; momentum 0.5 switching to 0.8 after
    iteration 250; init ~ Gaussian(0, 1e-4) from the seeded generator.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if not (3 * perplexity < n):
        raise AnalysisError(f"perplexity {perplexity} infeasible for n={n} (need 3*perplexity < n)")
    if n > 5000:
        raise AnalysisError(f"exact t-SNE capped at 5000 points, got {n}")
    p = _calibrated_affinities(points, perplexity)
    y = Rng(seed).normals(n, 2) * 1e-4
    velocity = np.zeros_like(y)
    lr = 200.0
    for it in range(iters):
        exaggeration = 12.0 if it < 250 else 1.0
        momentum = 0.5 if it < 250 else 0.8
        sq = np.einsum("ij,ij->i", y, y)
        num = 1.0 / (1.0 + sq[:, None] + sq[None, :] - 2.0 * (y @ y.T))
        np.fill_diagonal(num, 0.0)
        q = num / num.sum()
        coeff = (exaggeration * p - q) * num
        grad = 4.0 * ((np.diag(coeff.sum(axis=1)) - coeff) @ y)
        velocity = momentum * velocity - lr * grad
        y = y + velocity
        y = y - y.mean(axis=0)
    return y


def tsne_kl(points_p: np.ndarray, y: np.ndarray, perplexity: float = 32.0) -> float:
    """KL divergence of the current embedding against the calibrated P."""
    p = _calibrated_affinities(points_p, perplexity)
    sq = np.einsum("ij,ij->i", y, y)
    num = 1.0 / (1.0 + sq[:, None] + sq[None, :] - 2.0 * (y @ y.T))
    np.fill_diagonal(num, 0.0)
    q = num / num.sum()
    return _kl_divergence(p, q)
