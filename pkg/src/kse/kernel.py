"""Exponential power kernel k(x, z) = exp(-||x - z||^gamma / sigma).

The kernel formula lives here and nowhere else. gamma in (0, 2] keeps the
family positive definite; gamma = 2 is the Gaussian kernel and gamma = 1
the Laplacian. All arithmetic is float64: gamma < 1 amplifies rounding
near zero distance.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, MemoryBudgetError

# Dense kernel requests above this entry count are refused so callers batch.
DEFAULT_MAX_ENTRIES = 1 << 27

# Squared distances below this relative floor are snapped to exactly zero.
# The norm expansion leaves O(eps) residue for identical rows; without the
# snap k(x, x) evaluated through the expansion lands just below 1.
_SQDIST_SNAP = 1e-14

_ROW_BLOCK = 2048


@dataclass(frozen=True)
class KernelParams:
    """Shape parameter gamma and bandwidth sigma."""

    gamma: float
    sigma: float


def validate_params(gamma: float, sigma: float) -> KernelParams:
    """Validate raw (gamma, sigma) input and return KernelParams.

    Rejects gamma outside (0, 2] (positive definiteness fails beyond 2),
    non-positive sigma, and non-finite values.
    """
    gamma = float(gamma)
    sigma = float(sigma)
    if not math.isfinite(gamma):
        raise ConfigError("gamma must be finite")
    if not math.isfinite(sigma):
        raise ConfigError("sigma must be finite")
    if not 0.0 < gamma <= 2.0:
        raise ConfigError(f"gamma out of (0,2]: got {gamma}")
    if sigma <= 0.0:
        raise ConfigError(f"sigma must be positive: got {sigma}")
    return KernelParams(gamma=gamma, sigma=sigma)


def _as_matrix(X, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise DataError(f"{name} must be a 2-d sample matrix, got ndim={X.ndim}")
    return X


def pairwise_sq_dists(X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances via ||x||^2 + ||z||^2 - 2<x,z>.

    Negative and near-zero residues from the expansion are clamped/snapped
    to 0 so the gamma/2 power never sees a negative argument.
    """
    X = _as_matrix(X, "X")
    Z = _as_matrix(Z, "Z")
    if X.shape[1] != Z.shape[1]:
        raise DataError(
            f"feature dimension mismatch: X has {X.shape[1]}, Z has {Z.shape[1]}"
        )
    xn = np.einsum("ij,ij->i", X, X)
    zn = xn if Z is X else np.einsum("ij,ij->i", Z, Z)
    sq = xn[:, None] + zn[None, :]
    sq -= 2.0 * (X @ Z.T)
    floor = _SQDIST_SNAP * (xn[:, None] + zn[None, :])
    np.copyto(sq, 0.0, where=sq < floor)
    return sq


def kernel_from_sq_dists(params: KernelParams, sq: np.ndarray) -> np.ndarray:
    """Map squared distances to kernel values exp(-d^gamma / sigma)."""
    g = params.gamma
    if g == 2.0:
        d = sq
    elif g == 1.0:
        d = np.sqrt(sq)
    else:
        d = np.power(sq, 0.5 * g)
    return np.exp(d * (-1.0 / params.sigma))


def eval_kernel(params: KernelParams, x: np.ndarray, z: np.ndarray) -> float:
    """Kernel value for a single pair of feature vectors."""
    x = np.asarray(x, dtype=np.float64).ravel()
    z = np.asarray(z, dtype=np.float64).ravel()
    if x.shape != z.shape:
        raise DataError(f"dimension mismatch: {x.shape[0]} vs {z.shape[0]}")
    return float(kernel_from_sq_dists(params, pairwise_sq_dists(x, z))[0, 0])


def kernel_matrix(
    params: KernelParams,
    X: np.ndarray,
    Z: np.ndarray,
    *,
    max_entries: int = DEFAULT_MAX_ENTRIES,
    workers: int = 1,
) -> np.ndarray:
    """Dense kernel matrix with entry (i, j) = k(X_i, Z_j).

    When Z is the same object as X the result is exactly symmetric with a
    unit diagonal (each unordered pair is computed once and mirrored).
    Rows are processed in fixed-size blocks; with workers > 1 the blocks
    run on a thread pool but land in disjoint output slices, so the result
    is bit-identical for any worker count.

    Raises MemoryBudgetError when n_X * n_Z exceeds `max_entries`, which
    signals the caller to batch the request.
    """
    X = _as_matrix(X, "X")
    symmetric = Z is X
    Z = X if symmetric else _as_matrix(Z, "Z")
    if X.shape[1] != Z.shape[1]:
        raise DataError(
            f"feature dimension mismatch: X has {X.shape[1]}, Z has {Z.shape[1]}"
        )
    n, m = X.shape[0], Z.shape[0]
    if n * m > max_entries:
        raise MemoryBudgetError(
            f"kernel matrix {n}x{m} exceeds the {max_entries}-entry budget; "
            "batch the rows"
        )

    out = np.zeros((n, m), dtype=np.float64) if symmetric else np.empty((n, m))

    def fill(lo: int, hi: int) -> None:
        # Symmetric case: only the lower trapezoid rows lo:hi x cols 0:hi,
        # mirrored afterwards, so each unordered pair is computed once.
        cols = hi if symmetric else m
        sq = pairwise_sq_dists(X[lo:hi], Z[:cols])
        out[lo:hi, :cols] = kernel_from_sq_dists(params, sq)

    blocks = [(lo, min(lo + _ROW_BLOCK, n)) for lo in range(0, n, _ROW_BLOCK)]
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda b: fill(*b), blocks))
    else:
        for lo, hi in blocks:
            fill(lo, hi)

    if symmetric:
        lower = np.tril(out, -1)
        out = lower + lower.T
        np.fill_diagonal(out, 1.0)
    return out
