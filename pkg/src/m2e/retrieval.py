"""Recall@K evaluation with cosine ranking, plus per-language aggregation.

Similarities are computed in float64 from the 32-bit stored embeddings; ties
break toward the lower gallery row index via a stable sort.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .embio import EmbeddingSet, RetrievalCorpus
from .linalg import l2_normalize_rows


class EvalError(ValueError):
    pass


def _ranked_indices(queries: np.ndarray, gallery: np.ndarray) -> np.ndarray:
    """Gallery indices sorted by descending cosine similarity per query."""
    q = l2_normalize_rows(queries)
    g = l2_normalize_rows(gallery)
    sims = q @ g.T
    return np.argsort(-sims, kind="stable", axis=1)


def recall_at_k(
    queries: EmbeddingSet,
    gallery: EmbeddingSet,
    relevance: dict[str, list[str]],
    ks: list[int],
) -> dict[int, float]:
    """Percentage of queries with >= 1 relevant gallery item in the top K."""
    if max(ks) > gallery.n:
        raise EvalError(f"K={max(ks)} exceeds gallery size {gallery.n}")
    for qid in queries.ids:
        if not relevance.get(qid):
            raise EvalError(f"query {qid} has no relevant gallery ids")
    gallery_row = {gid: r for r, gid in enumerate(gallery.ids)}
    order = _ranked_indices(queries.vectors, gallery.vectors)
    ranks = np.argsort(order, kind="stable", axis=1)  # rank position of each gallery row
    hits = {k: 0 for k in ks}
    for qi, qid in enumerate(queries.ids):
        rel_rows = [gallery_row[g] for g in relevance[qid]]
        best_rank = int(ranks[qi, rel_rows].min())
        for k in ks:
            if best_rank < k:
                hits[k] += 1
    return {k: 100.0 * hits[k] / queries.n for k in ks}


def t2t_recall(
    captions: EmbeddingSet, instance_ids: list[str], ks: list[int]
) -> dict[int, float]:
    """Each caption queries all other captions; relevant = siblings of the
    same instance, self excluded from the gallery."""
    if len(instance_ids) != captions.n:
        raise EvalError("instance_ids length does not match captions")
    by_instance: dict[str, list[int]] = {}
    for row, inst in enumerate(instance_ids):
        by_instance.setdefault(inst, []).append(row)
    singles = [inst for inst, rows in by_instance.items() if len(rows) < 2]
    if singles:
        raise EvalError(f"instances with a single caption: {singles}")
    if max(ks) > captions.n - 1:
        raise EvalError(f"K={max(ks)} exceeds gallery size {captions.n - 1}")
    order = _ranked_indices(captions.vectors, captions.vectors)
    hits = {k: 0 for k in ks}
    for qi in range(captions.n):
        siblings = set(by_instance[instance_ids[qi]]) - {qi}
        rank = 0
        best_rank = None
        for gi in order[qi]:
            if gi == qi:
                continue  # self is not part of the gallery
            if gi in siblings:
                best_rank = rank
                break
            rank += 1
        for k in ks:
            if best_rank is not None and best_rank < k:
                hits[k] += 1
    return {k: 100.0 * hits[k] / captions.n for k in ks}


@dataclass
class RecallReport:
    corpus: str
    ks: list[int]
    results: list[dict] = field(default_factory=list)  # {lang, direction, k, recall}
    averages: dict = field(default_factory=dict)
    model: str | None = None

    def to_json(self) -> dict:
        return {
            "corpus": self.corpus,
            "ks": self.ks,
            "results": self.results,
            "averages": self.averages,
            "model": self.model,
            "toolkit_version": __version__,
        }


def _invert_relevance(relevance: dict[str, list[str]]) -> dict[str, list[str]]:
    inv: dict[str, list[str]] = {}
    for qid, gids in relevance.items():
        for g in gids:
            inv.setdefault(g, []).append(qid)
    return inv


def evaluate_corpus(
    model,
    corpus: RetrievalCorpus,
    directions: list[str] = ("t2i", "i2t"),
    ks: list[int] = (1, 5, 10),
    lang_subset: list[str] | None = None,
    corpus_name: str = "corpus",
    model_path: str | None = None,
) -> RecallReport:
    """Run retrieval in the requested directions per language.

    A supplied model projects the query-side (multilingual) embeddings; the
    gallery is never touched. Directions: t2i (query -> gallery), i2t
    (gallery -> query, relevance inverted), t2t (captions grouped by their
    relevant gallery id). Gallery items no query points at are skipped in i2t.
    """
    from .model import forward

    ks = sorted(ks)
    langs = sorted(corpus.query_sets)
    if lang_subset is not None:
        unknown = [l for l in lang_subset if l not in corpus.query_sets]
        if unknown:
            raise EvalError(f"unknown languages in subset: {unknown}")
    for d in directions:
        if d not in ("t2i", "i2t", "t2t"):
            raise EvalError(f"unknown direction {d!r}")
    report = RecallReport(corpus=corpus_name, ks=list(ks), model=model_path)
    per_lang: dict[tuple[str, str, int], float] = {}
    inv = _invert_relevance(corpus.relevance)
    for lang in langs:
        queries = corpus.query_sets[lang]
        projected = queries
        if model is not None:
            out, _ = forward(model, queries.vectors.astype(np.float64))
            projected = EmbeddingSet(
                vectors=out, ids=queries.ids, lang=queries.lang, texts=queries.texts
            )
        for direction in directions:
            if direction == "t2i":
                recalls = recall_at_k(projected, corpus.gallery, corpus.relevance, ks)
            elif direction == "i2t":
                qset = set(queries.ids)
                lang_inv = {
                    g: [q for q in inv.get(g, []) if q in qset] for g in corpus.gallery.ids
                }
                gallery_row = {g: r for r, g in enumerate(corpus.gallery.ids)}
                covered = [g for g, qs in lang_inv.items() if qs]
                gal_as_queries = corpus.gallery.select([gallery_row[g] for g in covered])
                recalls = recall_at_k(
                    gal_as_queries, projected, {g: lang_inv[g] for g in covered}, ks
                )
            else:  # t2t: instance = first relevant gallery id
                inst = [corpus.relevance[q][0] for q in projected.ids]
                recalls = t2t_recall(projected, inst, ks)
            for k, val in recalls.items():
                per_lang[(lang, direction, k)] = val
                report.results.append(
                    {"lang": lang, "direction": direction, "k": k, "recall": val}
                )
    averages: dict[str, dict[str, float]] = {"all": {}}
    if lang_subset is not None:
        averages["subset"] = {}
    for direction in directions:
        for k in ks:
            key = f"{direction}@{k}"
            averages["all"][key] = float(
                np.mean([per_lang[(l, direction, k)] for l in langs])
            )
            if lang_subset is not None:
                averages["subset"][key] = float(
                    np.mean([per_lang[(l, direction, k)] for l in sorted(lang_subset)])
                )
    report.averages = averages
    return report
