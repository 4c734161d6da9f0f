"""Synthetic paired-embedding benchmark generator.

Draws unit-norm Gaussian source rows, pushes them through a random
rank-controlled affine map plus Gaussian noise, and packages the result as
training pairs, ground truth, and a 1:1 retrieval corpus. Used by the
acceptance suite; no real encoders involved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embio import EmbeddingSet, PairedDataset, RetrievalCorpus, write_emb1
from .linalg import l2_normalize_rows
from .rng import Rng


@dataclass
class SyntheticTruth:
    map: np.ndarray  # d_e x d_m
    bias: np.ndarray  # d_e
    noise_sigma: float


def _random_orthogonal(rng: Rng, n: int) -> np.ndarray:
    """QR of a Gaussian matrix, sign-fixed so the factor is deterministic."""
    q, r = np.linalg.qr(rng.normals(n, n))
    return q * np.sign(np.diag(r))


def _apply_truth(truth: SyntheticTruth, zm: np.ndarray, noise: np.ndarray | None) -> np.ndarray:
    ze = zm @ truth.map.T + truth.bias
    if noise is not None and truth.noise_sigma > 0:
        ze = ze + truth.noise_sigma * noise
    return ze


def synth_generate(
    seed: int,
    n: int,
    d_m: int,
    d_e: int,
    map_rank: int,
    noise_sigma: float,
    n_eval: int = 0,
    truth: SyntheticTruth | None = None,
) -> tuple[PairedDataset, SyntheticTruth, RetrievalCorpus]:
    """Generate n training pairs; the corpus covers n_eval extra held-out rows
    when n_eval > 0, otherwise the training rows. Pass `truth` to reuse a map
    from another call (e.g. a matching held-out corpus)."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if not (0 <= map_rank <= min(d_m, d_e)):
        raise ValueError(f"map_rank {map_rank} outside [0, {min(d_m, d_e)}]")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    rng = Rng(seed)
    if truth is None:
        q_e = _random_orthogonal(rng, d_e)
        q_m = _random_orthogonal(rng, d_m)
        spectrum = np.zeros(min(d_m, d_e))
        if map_rank:
            spectrum[:map_rank] = np.linspace(1.5, 0.5, map_rank)
        w = q_e[:, : len(spectrum)] @ np.diag(spectrum) @ q_m[:, : len(spectrum)].T
        bias = 0.1 * rng.normals(d_e)
        truth = SyntheticTruth(map=w, bias=bias, noise_sigma=noise_sigma)

    def make_rows(count: int, prefix: str) -> tuple[EmbeddingSet, EmbeddingSet]:
        zm = l2_normalize_rows(rng.normals(count, d_m))
        noise = rng.normals(count, d_e) if noise_sigma > 0 else None
        ze = _apply_truth(truth, zm, noise)
        ids = [f"{prefix}{i:06d}" for i in range(count)]
        texts = [f"synthetic sentence {prefix}{i:06d}" for i in range(count)]
        zm_set = EmbeddingSet(vectors=zm.astype(np.float32), ids=ids, lang="en", texts=texts)
        ze_set = EmbeddingSet(vectors=ze.astype(np.float32), ids=ids, lang="en", texts=texts)
        return zm_set, ze_set

    zm_train, ze_train = make_rows(n, "s")
    pairs = PairedDataset(zm=zm_train, ze=ze_train)
    if n_eval > 0:
        zm_eval, ze_eval = make_rows(n_eval, "h")
    else:
        zm_eval, ze_eval = zm_train, ze_train
    gallery = EmbeddingSet(
        vectors=ze_eval.vectors,
        ids=[f"g-{i}" for i in ze_eval.ids],
        lang="en",
    )
    queries = EmbeddingSet(
        vectors=zm_eval.vectors,
        ids=[f"q-{i}" for i in zm_eval.ids],
        lang="en",
    )
    relevance = {f"q-{i}": [f"g-{i}"] for i in zm_eval.ids}
    corpus = RetrievalCorpus(gallery=gallery, query_sets={"en": queries}, relevance=relevance)
    return pairs, truth, corpus


def write_synth(
    pairs: PairedDataset,
    truth: SyntheticTruth,
    corpus: RetrievalCorpus,
    out_dir: str | Path,
) -> dict[str, str]:
    """Persist pairs + truth + corpus; returns the manifest paths written."""
    from .embio import write_corpus

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_emb1(pairs.zm, out / "zm.emb1")
    write_emb1(pairs.ze, out / "ze.emb1")
    (out / "pairs.json").write_text(json.dumps({"zm": "zm.emb1", "ze": "ze.emb1"}, indent=2))
    truth_set = EmbeddingSet(
        vectors=truth.map.astype(np.float64),
        ids=[f"row{i}" for i in range(truth.map.shape[0])],
        lang="und",
    )
    write_emb1(truth_set, out / "truth.map.emb1", dtype=2)
    bias_set = EmbeddingSet(vectors=truth.bias.reshape(1, -1), ids=["bias"], lang="und")
    write_emb1(bias_set, out / "truth.bias.emb1", dtype=2)
    (out / "truth.json").write_text(
        json.dumps(
            {"map": "truth.map.emb1", "bias": "truth.bias.emb1", "noise_sigma": truth.noise_sigma},
            indent=2,
        )
    )
    manifest = write_corpus(corpus, out, name="corpus")
    return {"pairs": str(out / "pairs.json"), "corpus": str(manifest), "truth": str(out / "truth.json")}
