"""Dense numerical kernels: matmul, row normalization, one-sided Jacobi SVD.

All kernels accumulate in float64 regardless of the storage dtype of their
inputs. Reductions run in fixed left-to-right order for bit reproducibility.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROW_NORM_EPS = 1e-12
_JACOBI_TOL = 1e-14
_JACOBI_MAX_SWEEPS = 64


class DimensionMismatchError(ValueError):
    pass


class DegenerateRowError(ValueError):
    pass


class SvdConvergenceError(RuntimeError):
    pass


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with float64 accumulation."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionMismatchError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}"
        )
    return a.astype(np.float64) @ b.astype(np.float64)


def l2_normalize_rows(m: np.ndarray) -> np.ndarray:
    """Scale each row to unit Euclidean norm."""
    m = np.asarray(m, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", m, m))
    bad = np.where(norms <= ROW_NORM_EPS)[0]
    if bad.size:
        raise DegenerateRowError(f"row {bad[0]} has near-zero norm ({norms[bad[0]]:.3e})")
    return m / norms[:, None]


@dataclass
class SvdResult:
    u: np.ndarray  # n x n orthogonal
    s: np.ndarray  # descending, non-negative
    v: np.ndarray  # n x n orthogonal


def svd(m: np.ndarray) -> SvdResult:
    """One-sided Jacobi SVD of a square matrix, M = U diag(s) V^T.

    Cyclic column rotations until every pair is numerically orthogonal;
    raises SvdConvergenceError with the worst off-diagonal residual if the
    sweep cap is hit.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"svd requires a square matrix, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("svd input contains non-finite entries")
    n = m.shape[0]
    a = m.copy()
    v = np.eye(n)
    converged = False
    for _ in range(_JACOBI_MAX_SWEEPS):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                ap = a[:, p]
                aq = a[:, q]
                alpha = float(ap @ ap)
                beta = float(aq @ aq)
                gamma = float(ap @ aq)
                if alpha == 0.0 or beta == 0.0:
                    continue
                if abs(gamma) <= _JACOBI_TOL * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                if zeta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                a[:, p], a[:, q] = c * ap - s * aq, s * ap + c * aq
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
        if not rotated:
            converged = True
            break
    if not converged:
        resid = _max_offdiag_residual(a)
        raise SvdConvergenceError(
            f"Jacobi SVD did not converge in {_JACOBI_MAX_SWEEPS} sweeps "
            f"(max off-diagonal residual {resid:.3e})"
        )
    sing = np.sqrt(np.einsum("ij,ij->j", a, a))
    order = np.argsort(-sing, kind="stable")
    sing = sing[order]
    a = a[:, order]
    v = v[:, order]
    u = _normalize_columns(a, sing)
    return SvdResult(u=u, s=sing, v=v)


def _max_offdiag_residual(a: np.ndarray) -> float:
    norms = np.sqrt(np.einsum("ij,ij->j", a, a))
    norms = np.where(norms == 0.0, 1.0, norms)
    g = (a.T @ a) / np.outer(norms, norms)
    np.fill_diagonal(g, 0.0)
    return float(np.max(np.abs(g)))


def _normalize_columns(a: np.ndarray, sing: np.ndarray) -> np.ndarray:
    """Columns of a divided by their norms; null columns completed to an
    orthonormal basis by Gram-Schmidt over canonical vectors."""
    n = a.shape[0]
    cutoff = n * np.finfo(np.float64).eps * (sing[0] if sing.size else 0.0)
    u = np.zeros((n, n))
    kept = 0
    for j in range(n):
        if sing[j] > cutoff:
            u[:, j] = a[:, j] / sing[j]
            kept = j + 1
    for j in range(kept, n):
        for e in range(n):
            cand = np.zeros(n)
            cand[e] = 1.0
            cand -= u[:, :j] @ (u[:, :j].T @ cand)
            norm = np.sqrt(cand @ cand)
            if norm > 1e-6:
                u[:, j] = cand / norm
                break
        else:  # pragma: no cover - basis completion always succeeds
            raise SvdConvergenceError("failed to complete orthonormal basis")
    return u
