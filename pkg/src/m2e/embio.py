"""Embedding sets, the EMB1 binary file format, manifests, and pair building.

EMB1 layout (little-endian): magic "M2E1", u32 version=1, u32 dtype
(1=float32, 2=float64), u64 n, u64 d, n*d values row-major, u64 byte length
of a UTF-8 JSON metadata block {"lang": str, "ids": [str], "texts": [str]|null}.
Corpus/pair manifests are plain JSON; relevance is JSONL.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import Rng

MAGIC = b"M2E1"
VERSION = 1
DTYPE_F32 = 1
DTYPE_F64 = 2
_DTYPES = {DTYPE_F32: np.dtype("<f4"), DTYPE_F64: np.dtype("<f8")}


class Emb1Error(ValueError):
    pass


class BadMagicError(Emb1Error):
    pass


class VersionMismatchError(Emb1Error):
    pass


class BadDtypeError(Emb1Error):
    pass


class TruncatedFileError(Emb1Error):
    pass


class MetadataMismatchError(Emb1Error):
    pass


class PairingError(ValueError):
    pass


class CorpusError(ValueError):
    pass


@dataclass
class EmbeddingSet:
    """n x d row vectors with aligned ids, a language tag, optional texts."""

    vectors: np.ndarray
    ids: list[str]
    lang: str = "und"
    texts: list[str] | None = None

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors))
        if len(self.ids) != self.n:
            raise Emb1Error(f"{len(self.ids)} ids for {self.n} rows")
        if len(set(self.ids)) != len(self.ids):
            raise Emb1Error("duplicate ids in embedding set")
        if self.texts is not None and len(self.texts) != self.n:
            raise Emb1Error(f"{len(self.texts)} texts for {self.n} rows")
        if self.d <= 0:
            raise Emb1Error("embedding dimension must be positive")

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def select(self, rows: np.ndarray | list[int]) -> "EmbeddingSet":
        rows = np.asarray(rows, dtype=np.int64)
        return EmbeddingSet(
            vectors=self.vectors[rows],
            ids=[self.ids[i] for i in rows],
            lang=self.lang,
            texts=None if self.texts is None else [self.texts[i] for i in rows],
        )


def write_emb1(es: EmbeddingSet, path: str | Path, dtype: int = DTYPE_F32) -> None:
    if dtype not in _DTYPES:
        raise BadDtypeError(f"unknown dtype code {dtype}")
    vectors = np.ascontiguousarray(es.vectors, dtype=_DTYPES[dtype])
    meta = json.dumps(
        {"lang": es.lang, "ids": es.ids, "texts": es.texts}, ensure_ascii=False
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIQQ", VERSION, dtype, es.n, es.d))
        f.write(vectors.tobytes())
        f.write(struct.pack("<Q", len(meta)))
        f.write(meta)


def read_emb1(path: str | Path) -> EmbeddingSet:
    blob = Path(path).read_bytes()
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 28:
        raise TruncatedFileError(f"{path}: header truncated at {len(blob)} bytes")
    version, dtype, n, d = struct.unpack_from("<IIQQ", blob, 4)
    if version != VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
    if dtype not in _DTYPES:
        raise BadDtypeError(f"{path}: unknown dtype code {dtype}")
    np_dtype = _DTYPES[dtype]
    payload_end = 28 + n * d * np_dtype.itemsize
    if len(blob) < payload_end + 8:
        raise TruncatedFileError(f"{path}: payload truncated")
    vectors = np.frombuffer(blob[28:payload_end], dtype=np_dtype).reshape(n, d).copy()
    (meta_len,) = struct.unpack_from("<Q", blob, payload_end)
    meta_start = payload_end + 8
    if len(blob) < meta_start + meta_len:
        raise TruncatedFileError(f"{path}: metadata truncated")
    meta = json.loads(blob[meta_start : meta_start + meta_len].decode("utf-8"))
    ids = meta["ids"]
    if len(ids) != n:
        raise MetadataMismatchError(f"{path}: {len(ids)} ids for {n} rows")
    return EmbeddingSet(vectors=vectors, ids=ids, lang=meta["lang"], texts=meta["texts"])


@dataclass
class PairedDataset:
    """Row-aligned (z_m, z_e) pairs, one sentence each."""

    zm: EmbeddingSet
    ze: EmbeddingSet

    def __post_init__(self):
        if self.zm.n != self.ze.n:
            raise PairingError(f"pair count mismatch: {self.zm.n} vs {self.ze.n}")

    @property
    def n(self) -> int:
        return self.zm.n

    def select(self, rows) -> "PairedDataset":
        return PairedDataset(zm=self.zm.select(rows), ze=self.ze.select(rows))


def concat_sets(sets: list[EmbeddingSet]) -> EmbeddingSet:
    if len(sets) == 1:
        return sets[0]
    return EmbeddingSet(
        vectors=np.concatenate([s.vectors for s in sets], axis=0),
        ids=[i for s in sets for i in s.ids],
        lang=sets[0].lang,
        texts=None
        if any(s.texts is None for s in sets)
        else [t for s in sets for t in s.texts],
    )


def build_pairs(zm: EmbeddingSet, ze: EmbeddingSet) -> PairedDataset:
    """Inner-join on id, drop later rows whose trimmed text duplicates an
    earlier one, keep zm's row order."""
    if zm.texts is None or ze.texts is None:
        raise PairingError("build_pairs requires texts on both sets")
    ze_by_id = {i: r for r, i in enumerate(ze.ids)}
    seen_texts: set[str] = set()
    zm_rows: list[int] = []
    ze_rows: list[int] = []
    for r, i in enumerate(zm.ids):
        other = ze_by_id.get(i)
        if other is None:
            continue
        key = zm.texts[r].strip()
        if key in seen_texts:
            continue
        seen_texts.add(key)
        zm_rows.append(r)
        ze_rows.append(other)
    if not zm_rows:
        raise PairingError("no ids shared between the two embedding sets")
    return PairedDataset(zm=zm.select(zm_rows), ze=ze.select(ze_rows))


def sample_split(pairs: PairedDataset, n: int, seed: int) -> PairedDataset:
    """Fisher-Yates selection of n rows; deterministic per seed."""
    if n > pairs.n:
        raise PairingError(f"cannot sample {n} pairs from {pairs.n}")
    rows = Rng(seed).sample_indices(pairs.n, n)
    return pairs.select(rows)


@dataclass
class RetrievalCorpus:
    """Gallery + per-language query sets + query-id -> relevant gallery ids."""

    gallery: EmbeddingSet
    query_sets: dict[str, EmbeddingSet]
    relevance: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        gallery_ids = set(self.gallery.ids)
        for qid, gids in self.relevance.items():
            if not gids:
                raise CorpusError(f"query {qid} has an empty relevance set")
            missing = [g for g in gids if g not in gallery_ids]
            if missing:
                raise CorpusError(f"query {qid} references unknown gallery ids {missing}")


def load_pair_manifest(path: str | Path) -> tuple[EmbeddingSet, EmbeddingSet]:
    spec = json.loads(Path(path).read_text())
    base = Path(path).parent
    return read_emb1(base / spec["zm"]), read_emb1(base / spec["ze"])


def load_pairs(manifest_paths: list[str | Path]) -> PairedDataset:
    """Concatenate all manifests' sets, then join and dedup once."""
    zms, zes = [], []
    for p in manifest_paths:
        zm, ze = load_pair_manifest(p)
        zms.append(zm)
        zes.append(ze)
    return build_pairs(concat_sets(zms), concat_sets(zes))


def load_relevance(path: str | Path) -> dict[str, list[str]]:
    relevance: dict[str, list[str]] = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            relevance[rec["query_id"]] = list(rec["gallery_ids"])
    return relevance


def load_corpus_manifest(path: str | Path) -> RetrievalCorpus:
    spec = json.loads(Path(path).read_text())
    base = Path(path).parent
    gallery = read_emb1(base / spec["gallery"])
    query_sets = {q["lang"]: read_emb1(base / q["file"]) for q in spec["queries"]}
    relevance = load_relevance(base / spec["relevance"])
    return RetrievalCorpus(gallery=gallery, query_sets=query_sets, relevance=relevance)


def write_corpus(corpus: RetrievalCorpus, out_dir: str | Path, name: str = "corpus") -> Path:
    """Write gallery/queries/relevance plus a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_emb1(corpus.gallery, out / "gallery.emb1")
    queries = []
    for lang, qs in sorted(corpus.query_sets.items()):
        fname = f"queries.{lang}.emb1"
        write_emb1(qs, out / fname)
        queries.append({"lang": lang, "file": fname})
    with open(out / "relevance.jsonl", "w") as f:
        for qid, gids in corpus.relevance.items():
            f.write(json.dumps({"query_id": qid, "gallery_ids": gids}) + "\n")
    manifest = out / f"{name}.json"
    manifest.write_text(
        json.dumps(
            {"gallery": "gallery.emb1", "queries": queries, "relevance": "relevance.jsonl"},
            indent=2,
        )
    )
    return manifest
