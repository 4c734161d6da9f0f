"""The projection network: a stack of affine layers with optional residual
skips, deterministic initialization, manual backprop, and checkpoint I/O.

No nonlinearities anywhere; the whole stack folds into a single affine map,
which is what the spectral analysis relies on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .embio import DTYPE_F64, EmbeddingSet, read_emb1, write_emb1
from .rng import Rng

ALLOWED_LAYERS = (1, 2, 4)


class ModelError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class ProjectionConfig:
    d_in: int
    d_out: int
    n_layers: int = 2
    skip: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_layers not in ALLOWED_LAYERS:
            raise ModelError(f"n_layers must be one of {ALLOWED_LAYERS}, got {self.n_layers}")
        if self.d_in <= 0 or self.d_out <= 0:
            raise ModelError("dims must be positive")


@dataclass
class Layer:
    w: np.ndarray  # out x in
    b: np.ndarray  # out
    skip: bool  # residual shortcut; only ever true for square layers


@dataclass
class ProjectionModel:
    config: ProjectionConfig
    layers: list[Layer] = field(default_factory=list)

    @property
    def n_params(self) -> int:
        return sum(layer.w.size + layer.b.size for layer in self.layers)


def init(config: ProjectionConfig) -> ProjectionModel:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases.

    Layer 1 maps d_in -> d_out; layers 2..n are d_out -> d_out. Skips apply
    only where input and output widths match.
    """
    rng = Rng(config.seed)
    layers = []
    for li in range(config.n_layers):
        fan_in = config.d_in if li == 0 else config.d_out
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniforms(config.d_out, fan_in, lo=-bound, hi=bound)
        b = np.zeros(config.d_out)
        square = fan_in == config.d_out
        layers.append(Layer(w=w, b=b, skip=config.skip and square))
    return ProjectionModel(config=config, layers=layers)


def forward(model: ProjectionModel, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Returns (output, cache of per-layer inputs for backward)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.config.d_in:
        raise ModelError(f"input shape {x.shape} incompatible with d_in={model.config.d_in}")
    cache = []
    h = x
    for layer in model.layers:
        cache.append(h)
        out = h @ layer.w.T + layer.b
        if layer.skip:
            out = out + h
        h = out
    return h, cache


def backward(
    model: ProjectionModel, cache: list[np.ndarray], dy: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Gradients (dW, db) per layer plus the gradient w.r.t. the input."""
    if len(cache) != len(model.layers):
        raise ModelError("cache does not match model depth")
    dy = np.asarray(dy, dtype=np.float64)
    if dy.shape != (cache[0].shape[0], model.config.d_out):
        raise ModelError(f"upstream gradient shape {dy.shape} is stale for this cache")
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(model.layers)
    dh = dy
    for li in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[li]
        x_in = cache[li]
        dw = dh.T @ x_in
        db = dh.sum(axis=0)
        dx = dh @ layer.w
        if layer.skip:
            dx = dx + dh
        grads[li] = (dw, db)
        dh = dx
    return grads, dh


def save_checkpoint(model: ProjectionModel, path: str | Path, extra: dict | None = None) -> None:
    """Directory with config.json plus one EMB1 (float64) file per tensor."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    cfg = {
        "d_in": model.config.d_in,
        "d_out": model.config.d_out,
        "n_layers": model.config.n_layers,
        "skip": model.config.skip,
        "seed": model.config.seed,
        "toolkit_version": __version__,
    }
    if extra:
        cfg.update(extra)
    (out / "config.json").write_text(json.dumps(cfg, indent=2))
    for li, layer in enumerate(model.layers):
        _write_tensor(layer.w, out / f"layer{li}.weight.emb1")
        _write_tensor(layer.b.reshape(1, -1), out / f"layer{li}.bias.emb1")


def _write_tensor(t: np.ndarray, path: Path) -> None:
    es = EmbeddingSet(vectors=t, ids=[f"row{i}" for i in range(t.shape[0])], lang="und")
    write_emb1(es, path, dtype=DTYPE_F64)


def load_checkpoint(path: str | Path) -> ProjectionModel:
    root = Path(path)
    cfg_path = root / "config.json"
    if not cfg_path.exists():
        raise CheckpointError(f"{root}: missing config.json")
    cfg = json.loads(cfg_path.read_text())
    config = ProjectionConfig(
        d_in=cfg["d_in"],
        d_out=cfg["d_out"],
        n_layers=cfg["n_layers"],
        skip=cfg["skip"],
        seed=cfg.get("seed", 0),
    )
    layers = []
    for li in range(config.n_layers):
        wpath = root / f"layer{li}.weight.emb1"
        bpath = root / f"layer{li}.bias.emb1"
        if not wpath.exists() or not bpath.exists():
            raise CheckpointError(f"{root}: missing tensor file for layer {li}")
        w = read_emb1(wpath).vectors.astype(np.float64)
        b = read_emb1(bpath).vectors.astype(np.float64).ravel()
        fan_in = config.d_in if li == 0 else config.d_out
        if w.shape != (config.d_out, fan_in) or b.shape != (config.d_out,):
            raise CheckpointError(
                f"{root}: layer {li} tensor shape {w.shape}/{b.shape} does not match "
                f"config ({config.d_out}, {fan_in})"
            )
        layers.append(Layer(w=w, b=b, skip=config.skip and fan_in == config.d_out))
    return ProjectionModel(config=config, layers=layers)


def clone(model: ProjectionModel) -> ProjectionModel:
    return ProjectionModel(
        config=model.config,
        layers=[Layer(w=l.w.copy(), b=l.b.copy(), skip=l.skip) for l in model.layers],
    )
