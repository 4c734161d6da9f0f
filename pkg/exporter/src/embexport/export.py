"""Drives an encoder over an input listing and writes one EMB1 file.

Inputs are JSONL, one object per row, order preserved:
  text:  {"id": str, "text": str}
  media: {"path": str, "id": str?}   (id defaults to the file stem)
Duplicate texts are kept as-is; any dedup policy belongs to the consumer.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .backends import EncoderError, make_encoder
from .emb1 import write_emb1
from .spec import ExportSpec


class InputError(ValueError):
    pass


def _read_jsonl(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{ln}: bad JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise InputError(f"{path}:{ln}: expected an object")
            rows.append(obj)
    if not rows:
        raise InputError(f"{path}: no input rows")
    return rows


def _check_unique(ids: list[str], path) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            raise InputError(f"{path}: duplicate id {i!r}")
        seen.add(i)


def _finish(vecs: np.ndarray, spec: ExportSpec) -> np.ndarray:
    if spec.normalize:
        norms = np.linalg.norm(vecs, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise EncoderError("cannot normalize a zero embedding")
        vecs = vecs / norms
    return vecs


def export_text(spec: ExportSpec) -> Path:
    rows = _read_jsonl(spec.input)
    for i, r in enumerate(rows):
        if "id" not in r or "text" not in r:
            raise InputError(f"{spec.input}: row {i} needs 'id' and 'text'")
    ids = [str(r["id"]) for r in rows]
    texts = [str(r["text"]) for r in rows]
    _check_unique(ids, spec.input)
    encoder = make_encoder(spec.encoder, spec.device)
    vecs = _finish(encoder.encode_text(texts, spec.pooling, spec.batch_size), spec)
    if vecs.shape[0] != len(ids):
        raise EncoderError(f"encoder returned {vecs.shape[0]} rows for {len(ids)} inputs")
    write_emb1(
        vecs,
        ids,
        spec.output,
        lang=spec.lang,
        texts=texts if spec.keep_texts else None,
    )
    return Path(spec.output)


def export_media(spec: ExportSpec) -> Path:
    rows = _read_jsonl(spec.input)
    paths, ids = [], []
    for i, r in enumerate(rows):
        if "path" not in r:
            raise InputError(f"{spec.input}: row {i} needs 'path'")
        p = str(r["path"])
        if not Path(p).is_file():
            raise InputError(f"missing media file: {p}")
        paths.append(p)
        ids.append(str(r["id"]) if "id" in r else Path(p).stem)
    _check_unique(ids, spec.input)
    encoder = make_encoder(spec.encoder, spec.device)
    vecs = _finish(encoder.encode_media(paths, spec.pooling, spec.batch_size), spec)
    if vecs.shape[0] != len(ids):
        raise EncoderError(f"encoder returned {vecs.shape[0]} rows for {len(ids)} inputs")
    write_emb1(vecs, ids, spec.output, lang=spec.lang, texts=None)
    return Path(spec.output)
