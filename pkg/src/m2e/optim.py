"""AdamW with decoupled weight decay and a linear warmup-then-decay schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class OptimError(ValueError):
    pass


@dataclass
class ScheduleConfig:
    base_lr: float = 3e-4
    warmup_steps: int = 50
    total_steps: int = 1

    def __post_init__(self):
        if not (0 < self.warmup_steps <= self.total_steps):
            raise OptimError(
                f"need 0 < warmup_steps <= total_steps, got {self.warmup_steps}/{self.total_steps}"
            )


def lr_at(step: int, cfg: ScheduleConfig) -> float:
    """Linear ramp to base_lr over warmup_steps, then linear decay to 0 at
    total_steps. Step 0 already has lr base_lr/warmup_steps."""
    if not (0 <= step <= cfg.total_steps):
        raise OptimError(f"step {step} outside [0, {cfg.total_steps}]")
    if step < cfg.warmup_steps:
        return cfg.base_lr * (step + 1) / cfg.warmup_steps
    span = cfg.total_steps - cfg.warmup_steps
    if span == 0:
        return 0.0
    return cfg.base_lr * (cfg.total_steps - step) / span


@dataclass
class AdamWState:
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamWState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            t=0,
        )


def adamw_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamWState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 1e-2,
    names: list[str] | None = None,
) -> None:
    """Single decoupled-decay update, mutating params and state in place:
    p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p).
    """
    if lr < 0:
        raise OptimError("lr must be >= 0")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise OptimError("params/grads/state length mismatch")
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise OptimError(f"gradient shape {g.shape} does not match param {p.shape}")
        if not np.all(np.isfinite(g)):
            name = names[i] if names else f"param[{i}]"
            raise OptimError(f"non-finite gradient in {name}")
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p -= lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * p)
