"""Export specification: what to encode, with which encoder, and where to
write. Loadable from YAML or JSON files."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import yaml

POOLINGS = ("cls", "mean", "pooled")


class SpecError(ValueError):
    pass


@dataclass
class ExportSpec:
    encoder: str  # backend id, e.g. "dummy:64" or "sentence-transformers:<model>"
    input: str  # JSONL file: {"id", "text"} for text, {"id"?, "path"} for media
    output: str  # EMB1 path
    pooling: str  # must be stated explicitly; encoders differ and it matters
    lang: str = "und"
    batch_size: int = 32
    device: str = "cpu"
    normalize: bool = False  # raw embeddings by default; consumers normalize
    keep_texts: bool = True

    def __post_init__(self):
        if self.pooling not in POOLINGS:
            raise SpecError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")
        if self.batch_size < 1:
            raise SpecError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.encoder:
            raise SpecError("encoder is required")


def load_spec(path: str | Path) -> ExportSpec:
    path = Path(path)
    raw = path.read_text()
    data = json.loads(raw) if path.suffix == ".json" else yaml.safe_load(raw)
    if not isinstance(data, dict):
        raise SpecError(f"{path}: expected a mapping at top level")
    known = ExportSpec.__dataclass_fields__
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise SpecError(f"{path}: unknown spec keys {unknown}")
    missing = [k for k in ("encoder", "input", "output", "pooling") if k not in data]
    if missing:
        raise SpecError(f"{path}: missing required keys {missing}")
    return ExportSpec(**data)
