"""Training losses with analytic gradients.

Targets are always gradient-free constants (the target encoder is frozen);
gradients flow only through the projected batch. In retrieval mode both
terms are computed on L2-normalized rows; generation mode skips
normalization and the structure term entirely.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

UNIT_NORM_TOL = 1e-4


class LossError(ValueError):
    pass


@dataclass
class LossConfig:
    kind: str = "combined"  # mse | l1 | similarity | combined
    lam: float = 48.0  # weight on the alignment term
    beta: float = 1.0  # weight on the structure term
    normalize: bool = True  # false in generation mode

    def __post_init__(self):
        if self.kind not in ("mse", "l1", "similarity", "combined"):
            raise LossError(f"unknown loss kind {self.kind!r}")
        if self.lam < 0 or self.beta < 0:
            raise LossError("loss weights must be non-negative")
        if not self.normalize and self.beta != 0.0:
            raise LossError("unnormalized (generation) mode requires beta=0")


def _check_shapes(u: np.ndarray, e: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u = np.asarray(u, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    if u.shape != e.shape or u.ndim != 2:
        raise LossError(f"shape mismatch: {u.shape} vs {e.shape}")
    return u, e


def align_mse(u: np.ndarray, e: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all B*d elements."""
    u, e = _check_shapes(u, e)
    diff = u - e
    scale = 1.0 / diff.size
    loss = float(np.einsum("ij,ij->", diff, diff) * scale)
    return loss, 2.0 * scale * diff


def l1_loss(u: np.ndarray, e: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean absolute deviation; subgradient sign(u-e), sign(0)=0."""
    u, e = _check_shapes(u, e)
    diff = u - e
    scale = 1.0 / diff.size
    return float(np.abs(diff).sum() * scale), np.sign(diff) * scale


def normalize_with_grad(
    u: np.ndarray,
) -> tuple[np.ndarray, Callable[[np.ndarray], np.ndarray]]:
    """Row-wise unit normalization and its vector-Jacobian product.

    backward(d_uhat) applies (I - uhat uhat^T)/||u|| per row.
    """
    u = np.asarray(u, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", u, u))
    if np.any(norms <= 1e-12):
        raise LossError(f"degenerate row at index {int(np.argmin(norms))}")
    u_hat = u / norms[:, None]

    def backward(du_hat: np.ndarray) -> np.ndarray:
        radial = np.einsum("ij,ij->i", du_hat, u_hat)
        return (du_hat - radial[:, None] * u_hat) / norms[:, None]

    return u_hat, backward


def similarity_loss(u: np.ndarray, e: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over rows of one minus cosine similarity."""
    u, e = _check_shapes(u, e)
    u_hat, back = normalize_with_grad(u)
    e_hat, _ = normalize_with_grad(e)
    cos = np.einsum("ij,ij->i", u_hat, e_hat)
    loss = float(np.mean(1.0 - cos))
    du_hat = -e_hat / u.shape[0]
    return loss, back(du_hat)


def structure_loss(u_hat: np.ndarray, e_hat: np.ndarray) -> tuple[float, np.ndarray]:
    """MSE over the strict upper triangles of the two cosine Gram matrices.

    Inputs must already be unit-norm rows; with B < 2 there are no pairs and
    the loss is exactly zero.
    """
    u_hat, e_hat = _check_shapes(u_hat, e_hat)
    for name, m in (("projected", u_hat), ("target", e_hat)):
        norms = np.sqrt(np.einsum("ij,ij->i", m, m))
        off = np.max(np.abs(norms - 1.0)) if norms.size else 0.0
        if off > UNIT_NORM_TOL:
            raise LossError(f"{name} rows are not unit-norm (max deviation {off:.2e})")
    b = u_hat.shape[0]
    if b < 2:
        return 0.0, np.zeros_like(u_hat)
    r_u = u_hat @ u_hat.T
    r_e = e_hat @ e_hat.T
    diff = r_u - r_e
    np.fill_diagonal(diff, 0.0)
    n_pairs = b * (b - 1) // 2
    iu = np.triu_indices(b, k=1)
    loss = float(np.einsum("i,i->", diff[iu], diff[iu]) / n_pairs)
    # d/dU of sum_{i<j} D_ij^2 with D symmetric, zero diagonal: 2 D U
    du_hat = (2.0 / n_pairs) * (diff @ u_hat)
    return loss, du_hat


def combined_loss(
    u_raw: np.ndarray, e_raw: np.ndarray, cfg: LossConfig
) -> tuple[float, dict[str, float], np.ndarray]:
    """Weighted alignment + structure objective.

    Retrieval mode normalizes both sides and chains the gradient back through
    the normalization of the projected rows; generation mode is plain
    unnormalized MSE with the structure term forced off.
    """
    u_raw, e_raw = _check_shapes(u_raw, e_raw)
    if not cfg.normalize:
        align, du = align_mse(u_raw, e_raw)
        return cfg.lam * align, {"align": align, "str": 0.0}, cfg.lam * du
    u_hat, back = normalize_with_grad(u_raw)
    e_hat, _ = normalize_with_grad(e_raw)
    align, du_align = align_mse(u_hat, e_hat)
    struct, du_struct = structure_loss(u_hat, e_hat)
    loss = cfg.lam * align + cfg.beta * struct
    du_hat = cfg.lam * du_align + cfg.beta * du_struct
    return loss, {"align": align, "str": struct}, back(du_hat)


def loss_for_kind(
    u_raw: np.ndarray, e_raw: np.ndarray, cfg: LossConfig
) -> tuple[float, dict[str, float], np.ndarray]:
    """Dispatch on cfg.kind; mse/l1/similarity honor cfg.normalize too."""
    if cfg.kind == "combined":
        return combined_loss(u_raw, e_raw, cfg)
    if cfg.normalize:
        u, back = normalize_with_grad(u_raw)
        e, _ = normalize_with_grad(e_raw)
    else:
        u, e = u_raw, e_raw
        back = lambda g: g
    fn = {"mse": align_mse, "l1": l1_loss, "similarity": similarity_loss}[cfg.kind]
    loss, du = fn(u, e)
    return cfg.lam * loss, {"align": loss, "str": 0.0}, cfg.lam * back(du)
