"""Encoder backends behind a common interface.

An encoder id is "<kind>:<arg>":
  dummy:<d>                    deterministic hash features, for tests/offline
  sentence-transformers:<name> SentenceTransformer text encoder
  transformers:<name>          raw HF text encoder with cls/mean pooling
  clip:<name>                  HF CLIP-style dual encoder (text + image)
The heavy backends import their libraries lazily so the dummy path has no
dependencies beyond numpy.
"""

from __future__ import annotations

import hashlib

import numpy as np


class EncoderError(RuntimeError):
    pass


class DummyEncoder:
    """Deterministic featurizer: SHA-256 of the input bytes expanded to d
    floats in [-1, 1). Not semantic, but stable across runs and platforms,
    which is exactly what the pipeline tests need."""

    def __init__(self, d: int):
        if d < 1:
            raise EncoderError(f"dummy dimension must be >= 1, got {d}")
        self.d = d

    def _features(self, payload: bytes) -> np.ndarray:
        out = np.empty(self.d, dtype=np.float64)
        counter = 0
        filled = 0
        while filled < self.d:
            digest = hashlib.sha256(payload + counter.to_bytes(4, "little")).digest()
            chunk = np.frombuffer(digest, dtype="<u4").astype(np.float64)
            take = min(len(chunk), self.d - filled)
            out[filled : filled + take] = chunk[:take] / 2**31 - 1.0
            filled += take
            counter += 1
        return out

    def encode_text(self, texts: list[str], pooling: str, batch_size: int) -> np.ndarray:
        return np.stack([self._features(t.encode("utf-8")) for t in texts])

    def encode_media(self, paths: list[str], pooling: str, batch_size: int) -> np.ndarray:
        rows = []
        for p in paths:
            try:
                with open(p, "rb") as f:
                    rows.append(self._features(f.read()))
            except OSError as exc:
                raise EncoderError(f"cannot read media file {p}: {exc}") from exc
        return np.stack(rows)


class SentenceTransformerEncoder:
    def __init__(self, name: str, device: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise EncoderError(f"sentence-transformers not installed: {exc}") from exc
        try:
            self.model = SentenceTransformer(name, device=device)
        except Exception as exc:
            raise EncoderError(f"cannot load encoder {name!r}: {exc}") from exc

    def encode_text(self, texts: list[str], pooling: str, batch_size: int) -> np.ndarray:
        # pooling is baked into the saved model; "pooled" acknowledges that
        if pooling != "pooled":
            raise EncoderError("sentence-transformers models define their own pooling; use pooling: pooled")
        vecs = self.model.encode(
            texts, batch_size=batch_size, convert_to_numpy=True, normalize_embeddings=False
        )
        return np.asarray(vecs, dtype=np.float64)

    def encode_media(self, paths, pooling, batch_size):
        raise EncoderError("sentence-transformers backend is text-only")


class TransformersTextEncoder:
    def __init__(self, name: str, device: str):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise EncoderError(f"transformers/torch not installed: {exc}") from exc
        self.torch = torch
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(name)
            self.model = AutoModel.from_pretrained(name).to(device).eval()
        except Exception as exc:
            raise EncoderError(f"cannot load encoder {name!r}: {exc}") from exc
        self.device = device

    def encode_text(self, texts: list[str], pooling: str, batch_size: int) -> np.ndarray:
        torch = self.torch
        rows = []
        with torch.no_grad():
            for start in range(0, len(texts), batch_size):
                batch = texts[start : start + batch_size]
                enc = self.tokenizer(
                    batch, padding=True, truncation=True, return_tensors="pt"
                ).to(self.device)
                hidden = self.model(**enc).last_hidden_state
                if pooling == "cls":
                    pooled = hidden[:, 0]
                elif pooling == "mean":
                    mask = enc["attention_mask"].unsqueeze(-1)
                    pooled = (hidden * mask).sum(1) / mask.sum(1).clamp(min=1)
                else:
                    raise EncoderError("transformers backend supports pooling cls or mean")
                rows.append(pooled.cpu().double().numpy())
        return np.vstack(rows)

    def encode_media(self, paths, pooling, batch_size):
        raise EncoderError("transformers text backend is text-only")


class ClipEncoder:
    def __init__(self, name: str, device: str):
        try:
            import torch
            from PIL import Image
            from transformers import AutoModel, AutoProcessor
        except ImportError as exc:
            raise EncoderError(f"transformers/torch/Pillow not installed: {exc}") from exc
        self.torch = torch
        self.Image = Image
        try:
            self.processor = AutoProcessor.from_pretrained(name)
            self.model = AutoModel.from_pretrained(name).to(device).eval()
        except Exception as exc:
            raise EncoderError(f"cannot load encoder {name!r}: {exc}") from exc
        self.device = device

    def encode_text(self, texts: list[str], pooling: str, batch_size: int) -> np.ndarray:
        if pooling != "pooled":
            raise EncoderError("clip backend exposes its projection head; use pooling: pooled")
        torch = self.torch
        rows = []
        with torch.no_grad():
            for start in range(0, len(texts), batch_size):
                enc = self.processor(
                    text=texts[start : start + batch_size],
                    padding=True,
                    truncation=True,
                    return_tensors="pt",
                ).to(self.device)
                rows.append(self.model.get_text_features(**enc).cpu().double().numpy())
        return np.vstack(rows)

    def encode_media(self, paths: list[str], pooling: str, batch_size: int) -> np.ndarray:
        if pooling != "pooled":
            raise EncoderError("clip backend exposes its projection head; use pooling: pooled")
        torch = self.torch
        rows = []
        with torch.no_grad():
            for start in range(0, len(paths), batch_size):
                images = []
                for p in paths[start : start + batch_size]:
                    try:
                        images.append(self.Image.open(p).convert("RGB"))
                    except OSError as exc:
                        raise EncoderError(f"cannot read media file {p}: {exc}") from exc
                enc = self.processor(images=images, return_tensors="pt").to(self.device)
                rows.append(self.model.get_image_features(**enc).cpu().double().numpy())
        return np.vstack(rows)


def make_encoder(encoder_id: str, device: str = "cpu"):
    kind, _, arg = encoder_id.partition(":")
    if not arg:
        raise EncoderError(f"encoder id needs a '<kind>:<arg>' form, got {encoder_id!r}")
    if kind == "dummy":
        try:
            return DummyEncoder(int(arg))
        except ValueError as exc:
            raise EncoderError(f"bad dummy dimension {arg!r}") from exc
    if kind == "sentence-transformers":
        return SentenceTransformerEncoder(arg, device)
    if kind == "transformers":
        return TransformersTextEncoder(arg, device)
    if kind == "clip":
        return ClipEncoder(arg, device)
    raise EncoderError(f"unknown encoder kind {kind!r}")
