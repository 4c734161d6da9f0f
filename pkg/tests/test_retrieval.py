import numpy as np
import pytest

from m2e.embio import EmbeddingSet, RetrievalCorpus
from m2e.model import Layer, ProjectionConfig, ProjectionModel
from m2e.retrieval import EvalError, evaluate_corpus, recall_at_k, t2t_recall
from m2e.rng import Rng


def make_set(vectors, prefix, lang="en"):
    vectors = np.asarray(vectors, dtype=np.float32)
    return EmbeddingSet(
        vectors=vectors, ids=[f"{prefix}{i}" for i in range(vectors.shape[0])], lang=lang
    )


def oracle_recall(queries, gallery, relevance, ks):
    """Independent O(n^2) full-sort oracle: normalize, full similarity table,
    per-query stable sort, count hits."""
    q = queries.vectors.astype(np.float64)
    g = gallery.vectors.astype(np.float64)
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    g = g / np.linalg.norm(g, axis=1, keepdims=True)
    out = {}
    for k in ks:
        hits = 0
        for qi, qid in enumerate(queries.ids):
            sims = [(-(q[qi] @ g[gi]), gi) for gi in range(g.shape[0])]
            sims.sort()
            top = [gallery.ids[gi] for _, gi in sims[:k]]
            if any(r in top for r in relevance[qid]):
                hits += 1
        out[k] = 100.0 * hits / len(queries.ids)
    return out


def test_self_retrieval_recall_100():
    vecs = Rng(1).normals(8, 4)
    gallery = make_set(vecs, "g")
    queries = EmbeddingSet(vectors=vecs.astype(np.float32), ids=[f"q{i}" for i in range(8)], lang="en")
    relevance = {f"q{i}": [f"g{i}"] for i in range(8)}
    assert recall_at_k(queries, gallery, relevance, [1])[1] == 100.0


def test_matches_oracle_random_corpus():
    r = Rng(2)
    gallery = make_set(r.normals(20, 6), "g")
    queries = make_set(r.normals(12, 6), "q")
    relevance = {f"q{i}": [f"g{(i * 3) % 20}", f"g{(i + 5) % 20}"] for i in range(12)}
    ks = [1, 5, 10]
    assert recall_at_k(queries, gallery, relevance, ks) == oracle_recall(
        queries, gallery, relevance, ks
    )


def test_rank_three_item():
    # query along x; gallery items with decreasing x-similarity; relevant at rank 3
    gallery = make_set(
        [[1.0, 0.0], [0.9, 0.1], [0.8, 0.3], [0.5, 0.5], [0.0, 1.0]], "g"
    )
    queries = make_set([[1.0, 0.0]], "q")
    relevance = {"q0": ["g2"]}
    out = recall_at_k(queries, gallery, relevance, [1, 5])
    assert out[1] == 0.0 and out[5] == 100.0


def test_k_exceeds_gallery():
    gallery = make_set(Rng(3).normals(4, 3), "g")
    queries = make_set(Rng(4).normals(2, 3), "q")
    with pytest.raises(EvalError):
        recall_at_k(queries, gallery, {"q0": ["g0"], "q1": ["g1"]}, [10])


def test_empty_relevance_error():
    gallery = make_set(Rng(5).normals(4, 3), "g")
    queries = make_set(Rng(6).normals(1, 3), "q")
    with pytest.raises(EvalError):
        recall_at_k(queries, gallery, {"q0": []}, [1])


def test_recall_monotone_in_k():
    r = Rng(7)
    gallery = make_set(r.normals(30, 5), "g")
    queries = make_set(r.normals(10, 5), "q")
    relevance = {f"q{i}": [f"g{i}"] for i in range(10)}
    out = recall_at_k(queries, gallery, relevance, [1, 3, 5, 10, 30])
    vals = [out[k] for k in sorted(out)]
    assert vals == sorted(vals)
    assert out[30] == 100.0


def test_recall_row_rescaling_invariance():
    r = Rng(8)
    gvecs = r.normals(15, 4)
    qvecs = r.normals(6, 4)
    relevance = {f"q{i}": [f"g{(i * 2) % 15}"] for i in range(6)}
    base = recall_at_k(make_set(qvecs, "q"), make_set(gvecs, "g"), relevance, [1, 5])
    scales_g = Rng(9).uniforms(15, lo=0.1, hi=5.0)[:, None]
    scales_q = Rng(10).uniforms(6, lo=0.1, hi=5.0)[:, None]
    scaled = recall_at_k(
        make_set(qvecs * scales_q, "q"), make_set(gvecs * scales_g, "g"), relevance, [1, 5]
    )
    assert base == scaled


# --- t2t


def test_t2t_identical_caption_pairs():
    vecs = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    caps = make_set(vecs, "c")
    out = t2t_recall(caps, ["i0", "i0", "i1", "i1"], [1])
    assert out[1] == 100.0


def test_t2t_matches_bruteforce():
    r = Rng(11)
    caps = make_set(r.normals(12, 5), "c")
    instances = [f"i{j // 3}" for j in range(12)]  # 4 instances x 3 captions
    got = t2t_recall(caps, instances, [1, 5])

    # brute force: rank all other captions per caption
    v = caps.vectors.astype(np.float64)
    v = v / np.linalg.norm(v, axis=1, keepdims=True)
    for k in (1, 5):
        hits = 0
        for qi in range(12):
            sims = sorted(
                ((-(v[qi] @ v[gi]), gi) for gi in range(12) if gi != qi)
            )
            top = [gi for _, gi in sims[:k]]
            if any(instances[gi] == instances[qi] for gi in top):
                hits += 1
        assert got[k] == 100.0 * hits / 12


def test_t2t_singleton_instance_error():
    caps = make_set(Rng(12).normals(3, 4), "c")
    with pytest.raises(EvalError, match="i1"):
        t2t_recall(caps, ["i0", "i0", "i1"], [1])


# --- evaluate_corpus


def identity_projection(d):
    cfg = ProjectionConfig(d_in=d, d_out=d, n_layers=1, seed=0)
    return ProjectionModel(config=cfg, layers=[Layer(w=np.eye(d), b=np.zeros(d), skip=False)])


def random_corpus(seed, n=16, d=5, langs=("en", "de")):
    r = Rng(seed)
    gallery = make_set(r.normals(n, d), "g")
    query_sets = {
        lang: EmbeddingSet(
            vectors=r.normals(n, d).astype(np.float32),
            ids=[f"{lang}-q{i}" for i in range(n)],
            lang=lang,
        )
        for lang in langs
    }
    relevance = {f"{lang}-q{i}": [f"g{i}"] for lang in langs for i in range(n)}
    return RetrievalCorpus(gallery=gallery, query_sets=query_sets, relevance=relevance)


def test_identity_model_equals_no_model():
    corpus = random_corpus(13)
    a = evaluate_corpus(None, corpus)
    b = evaluate_corpus(identity_projection(5), corpus)
    assert a.results == b.results
    assert a.averages == b.averages


def test_subset_average_en_equals_en_row():
    corpus = random_corpus(14)
    rep = evaluate_corpus(None, corpus, lang_subset=["en"])
    en = {(r["direction"], r["k"]): r["recall"] for r in rep.results if r["lang"] == "en"}
    for (direction, k), val in en.items():
        assert rep.averages["subset"][f"{direction}@{k}"] == val


def test_averages_recompute_from_rows():
    corpus = random_corpus(15)
    rep = evaluate_corpus(None, corpus)
    langs = sorted(corpus.query_sets)
    for direction in ("t2i", "i2t"):
        for k in (1, 5, 10):
            rows = [
                r["recall"]
                for r in rep.results
                if r["direction"] == direction and r["k"] == k
            ]
            assert abs(rep.averages["all"][f"{direction}@{k}"] - np.mean(rows)) < 1e-12
            assert len(rows) == len(langs)


def test_unknown_subset_language():
    with pytest.raises(EvalError):
        evaluate_corpus(None, random_corpus(16), lang_subset=["xx"])


def test_truth_map_projection_high_recall():
    from m2e.synth import synth_generate

    _, truth, corpus = synth_generate(
        seed=17, n=200, d_m=8, d_e=8, map_rank=8, noise_sigma=0.01
    )
    cfg = ProjectionConfig(d_in=8, d_out=8, n_layers=1, seed=0)
    model = ProjectionModel(
        config=cfg, layers=[Layer(w=truth.map, b=truth.bias, skip=False)]
    )
    rep = evaluate_corpus(model, corpus, directions=["t2i"], ks=[1])
    assert rep.averages["all"]["t2i@1"] >= 99.0


def test_gallery_permutation_invariance_generic():
    corpus = random_corpus(18, n=12, d=6, langs=("en",))
    rep_a = evaluate_corpus(None, corpus)
    perm = Rng(19).permutation(12)
    permuted = RetrievalCorpus(
        gallery=corpus.gallery.select(perm),
        query_sets=corpus.query_sets,
        relevance=corpus.relevance,
    )
    rep_b = evaluate_corpus(None, permuted)
    assert rep_a.averages == rep_b.averages
