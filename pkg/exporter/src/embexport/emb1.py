"""Writer for the EMB1 interchange format.

Layout (little-endian): magic "M2E1", u32 version=1, u32 dtype (1=float32),
u64 n, u64 d, n*d float32 values row-major, then a u64 byte length followed by
a UTF-8 JSON metadata block {"lang": str, "ids": [str], "texts": [str]|null}.
This module only writes; consumers read through their own validators.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"M2E1"
VERSION = 1
DTYPE_F32 = 1


class Emb1WriteError(ValueError):
    pass


def write_emb1(
    vectors: np.ndarray,
    ids: list[str],
    path: str | Path,
    lang: str = "und",
    texts: list[str] | None = None,
) -> None:
    vectors = np.ascontiguousarray(np.atleast_2d(vectors), dtype="<f4")
    n, d = vectors.shape
    if len(ids) != n:
        raise Emb1WriteError(f"{len(ids)} ids for {n} rows")
    if len(set(ids)) != n:
        raise Emb1WriteError("ids must be unique within one file")
    if texts is not None and len(texts) != n:
        raise Emb1WriteError(f"{len(texts)} texts for {n} rows")
    if not np.all(np.isfinite(vectors)):
        raise Emb1WriteError("non-finite values in embeddings")
    meta = json.dumps(
        {"lang": lang, "ids": list(ids), "texts": texts}, ensure_ascii=False
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIQQ", VERSION, DTYPE_F32, n, d))
        f.write(vectors.tobytes())
        f.write(struct.pack("<Q", len(meta)))
        f.write(meta)
