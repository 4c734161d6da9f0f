"""Builds the retrieval-corpus and pair manifests that tie exported EMB1
files together, validating that every referenced id actually exists."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import yaml

from .emb1 import DTYPE_F32, MAGIC, VERSION


class ManifestError(ValueError):
    pass


def read_ids(path: str | Path) -> list[str]:
    """Ids from an EMB1 file's metadata block, skipping the value payload."""
    blob = Path(path).read_bytes()
    if len(blob) < 28 or blob[:4] != MAGIC:
        raise ManifestError(f"{path}: not an EMB1 file")
    version, dtype, n, d = struct.unpack_from("<IIQQ", blob, 4)
    if version != VERSION:
        raise ManifestError(f"{path}: unsupported version {version}")
    itemsize = 4 if dtype == DTYPE_F32 else 8
    offset = 28 + n * d * itemsize
    (meta_len,) = struct.unpack_from("<Q", blob, offset)
    meta = json.loads(blob[offset + 8 : offset + 8 + meta_len].decode("utf-8"))
    ids = meta["ids"]
    if len(ids) != n:
        raise ManifestError(f"{path}: {len(ids)} ids for {n} rows")
    return ids


def _load_relevance(path: str | Path) -> dict[str, list[str]]:
    relevance: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            qid, gids = obj["query_id"], obj["gallery_ids"]
            if qid in relevance:
                raise ManifestError(f"{path}:{ln}: duplicate query_id {qid!r}")
            if not gids:
                raise ManifestError(f"{path}:{ln}: empty gallery_ids for {qid!r}")
            relevance[qid] = list(gids)
    if not relevance:
        raise ManifestError(f"{path}: no relevance entries")
    return relevance


def build_corpus_manifest(
    gallery: str | Path,
    queries: dict[str, str | Path],
    relevance: str | Path,
    out_dir: str | Path,
) -> Path:
    """Validate id wiring and write corpus.json + relevance.jsonl."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gallery_ids = set(read_ids(gallery))
    query_ids: set[str] = set()
    for lang, qpath in queries.items():
        ids = read_ids(qpath)
        query_ids.update(ids)
    rel = _load_relevance(relevance)
    dangling_q = sorted(set(rel) - query_ids)
    if dangling_q:
        raise ManifestError(f"relevance references unknown query ids: {dangling_q[:5]}")
    dangling_g = sorted({g for gids in rel.values() for g in gids} - gallery_ids)
    if dangling_g:
        raise ManifestError(f"relevance references unknown gallery ids: {dangling_g[:5]}")
    uncovered = sorted(query_ids - set(rel))
    if uncovered:
        raise ManifestError(f"queries without any relevant gallery id: {uncovered[:5]}")

    rel_path = out / "relevance.jsonl"
    with open(rel_path, "w", encoding="utf-8") as f:
        for qid in sorted(rel):
            f.write(json.dumps({"query_id": qid, "gallery_ids": rel[qid]}) + "\n")
    manifest = {
        "gallery": str(Path(gallery).resolve()),
        "queries": [
            {"lang": lang, "file": str(Path(qpath).resolve())}
            for lang, qpath in sorted(queries.items())
        ],
        "relevance": str(rel_path.resolve()),
    }
    path = out / "corpus.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def build_pair_manifest(zm: str | Path, ze: str | Path, out_dir: str | Path) -> Path:
    """Write pairs.json after checking the two files share ids to join on."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    shared = set(read_ids(zm)) & set(read_ids(ze))
    if not shared:
        raise ManifestError(f"no shared ids between {zm} and {ze}")
    path = out / "pairs.json"
    path.write_text(
        json.dumps({"zm": str(Path(zm).resolve()), "ze": str(Path(ze).resolve())}, indent=2)
    )
    return path


def build_from_layout(layout_path: str | Path) -> list[Path]:
    """One-shot driver for a YAML/JSON layout file:

    gallery: g.emb1
    queries: {en: caps_en.emb1, de: caps_de.emb1}
    relevance: captions.jsonl
    pairs: {zm: zm.emb1, ze: ze.emb1}   # optional
    out: manifests/
    """
    layout_path = Path(layout_path)
    raw = layout_path.read_text()
    layout = json.loads(raw) if layout_path.suffix == ".json" else yaml.safe_load(raw)
    if not isinstance(layout, dict) or "out" not in layout:
        raise ManifestError(f"{layout_path}: layout needs at least an 'out' key")
    base = layout_path.parent

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    written = []
    if "gallery" in layout:
        for key in ("queries", "relevance"):
            if key not in layout:
                raise ManifestError(f"{layout_path}: corpus layout needs {key!r}")
        written.append(
            build_corpus_manifest(
                resolve(layout["gallery"]),
                {lang: resolve(p) for lang, p in layout["queries"].items()},
                resolve(layout["relevance"]),
                resolve(layout["out"]),
            )
        )
    if "pairs" in layout:
        written.append(
            build_pair_manifest(
                resolve(layout["pairs"]["zm"]),
                resolve(layout["pairs"]["ze"]),
                resolve(layout["out"]),
            )
        )
    if not written:
        raise ManifestError(f"{layout_path}: nothing to build (no 'gallery' or 'pairs')")
    return written
