"""Training loop: batching, loss, AdamW, per-epoch validation, best-checkpoint
selection. The run directory gets config.json, log.jsonl, best/ and last/."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .embio import PairedDataset, RetrievalCorpus
from .model import ProjectionConfig, ProjectionModel, backward, clone, forward, init, save_checkpoint
from .objectives import LossConfig, loss_for_kind
from .optim import AdamWState, ScheduleConfig, adamw_step, lr_at
from .retrieval import evaluate_corpus
from .rng import Rng, mix_seed


class TrainError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    mode: str = "retrieval"  # retrieval | generation
    weight_decay: float = 1e-2

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise TrainError("epochs and batch_size must be >= 1")
        if self.mode not in ("retrieval", "generation"):
            raise TrainError(f"unknown mode {self.mode!r}")
        if self.mode == "generation":
            # generative targets keep their scale; no structure term
            self.loss = LossConfig(
                kind=self.loss.kind, lam=self.loss.lam, beta=0.0, normalize=False
            )


@dataclass
class RunLog:
    steps: list[dict] = field(default_factory=list)
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_score: float = float("-inf")


def validate(model: ProjectionModel, val: RetrievalCorpus) -> float:
    """Mean of T2I and I2T Recall@{1,5,10} averaged across languages."""
    report = evaluate_corpus(model, val, directions=["t2i", "i2t"], ks=[1, 5, 10])
    return float(np.mean([report.averages["all"][k] for k in sorted(report.averages["all"])]))


def train(
    pairs: PairedDataset,
    val: RetrievalCorpus | None,
    model_cfg: ProjectionConfig,
    cfg: TrainConfig,
    out_dir: str | Path,
    quiet: bool = True,
) -> tuple[ProjectionModel, RunLog]:
    if pairs.n == 0:
        raise TrainError("empty training set")
    if pairs.zm.d != model_cfg.d_in or pairs.ze.d != model_cfg.d_out:
        raise TrainError(
            f"pair dims ({pairs.zm.d}->{pairs.ze.d}) do not match model "
            f"({model_cfg.d_in}->{model_cfg.d_out})"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    steps_per_epoch = -(-pairs.n // cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    schedule = ScheduleConfig(
        base_lr=cfg.schedule.base_lr,
        warmup_steps=min(cfg.schedule.warmup_steps, total_steps),
        total_steps=total_steps,
    )
    snapshot = {
        "model": asdict(model_cfg),
        "train": {
            "epochs": cfg.epochs,
            "batch_size": cfg.batch_size,
            "seed": cfg.seed,
            "mode": cfg.mode,
            "weight_decay": cfg.weight_decay,
            "loss": asdict(cfg.loss),
            "schedule": asdict(schedule),
        },
        "toolkit_version": __version__,
    }
    (out / "config.json").write_text(json.dumps(snapshot, indent=2))

    model = init(model_cfg)
    params = [t for layer in model.layers for t in (layer.w, layer.b)]
    names = [f"layer{i}.{n}" for i in range(len(model.layers)) for n in ("weight", "bias")]
    state = AdamWState.for_params(params)
    zm = pairs.zm.vectors.astype(np.float64)
    ze = pairs.ze.vectors.astype(np.float64)

    log = RunLog()
    best_model = None
    global_step = 0
    with open(out / "log.jsonl", "w") as logf:
        for epoch in range(cfg.epochs):
            order = Rng(mix_seed(cfg.seed, epoch + 1)).permutation(pairs.n)
            for start in range(0, pairs.n, cfg.batch_size):
                batch = order[start : start + cfg.batch_size]
                y, cache = forward(model, zm[batch])
                loss, comps, dy = loss_for_kind(y, ze[batch], cfg.loss)
                if not np.isfinite(loss):
                    raise TrainError(f"non-finite loss at step {global_step}")
                grads_layers, _ = backward(model, cache, dy)
                grads = [t for gw, gb in grads_layers for t in (gw, gb)]
                lr = lr_at(global_step, schedule)
                adamw_step(
                    params, grads, state, lr, weight_decay=cfg.weight_decay, names=names
                )
                event = {
                    "event": "step",
                    "step": global_step,
                    "epoch": epoch,
                    "loss": loss,
                    "align": comps["align"],
                    "str": comps["str"],
                    "lr": lr,
                }
                log.steps.append(event)
                logf.write(json.dumps(event) + "\n")
                global_step += 1
            score = validate(model, val) if val is not None else -float(
                np.mean([log.steps[-1]["loss"]])
            )
            is_best = score > log.best_score
            if is_best:
                log.best_score = score
                log.best_epoch = epoch
                best_model = clone(model)
                save_checkpoint(best_model, out / "best", extra={"loss": asdict(cfg.loss)})
            event = {"event": "epoch", "epoch": epoch, "val": score, "best": is_best}
            log.epochs.append(event)
            logf.write(json.dumps(event) + "\n")
            if not quiet:
                print(f"epoch {epoch}: val {score:.4f}" + (" *" if is_best else ""))
    save_checkpoint(model, out / "last", extra={"loss": asdict(cfg.loss)})
    return best_model, log
