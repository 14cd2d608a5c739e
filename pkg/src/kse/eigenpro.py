"""Iterative solver for the kernel least-squares system K alpha = Y.

train() runs preconditioned stochastic iteration: plain kernel gradient
descent on random batches plus a rank-q spectral correction built from a
Nystrom estimate of the top kernel eigensystem. Deflating the top q
directions lets the step size be governed by the (q+1)-th eigenvalue
instead of the first, which is what makes the iteration fast.
direct_solve() is the dense factorization used as the small-data path and
as the test oracle.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import ConfigError, DataError, NumericError
from .kernel import (
    DEFAULT_MAX_ENTRIES,
    KernelParams,
    kernel_from_sq_dists,
    kernel_matrix,
)

DIRECT_SOLVE_CAP = 4096

# Tail eigenvalues below this fraction of the top one mean the subsample
# kernel matrix is effectively rank deficient for the requested q.
_DEGENERATE_REL = 1e-12


@dataclass
class SolverConfig:
    """Knobs for train(). m=None resolves to min(n, 4800) at fit time."""

    q: int = 160
    m: Optional[int] = None
    batch_size: int = 256
    max_epochs: int = 50
    patience: int = 2
    step_scale: float = 0.5
    seed: int = 0

    def resolve(self, n: int) -> tuple[int, int]:
        """Return (q, m) for a training set of n rows, validating bounds."""
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.step_scale <= 0:
            raise ConfigError(f"step_scale must be positive, got {self.step_scale}")
        if self.q < 0:
            raise ConfigError(f"q must be >= 0, got {self.q}")
        if self.m is None:
            m = min(n, 4800)
            q = min(self.q, m - 1)
        else:
            m = self.m
            q = self.q
        if not 0 <= q < m <= n:
            raise ConfigError(f"need 0 <= q < m <= n, got q={q}, m={m}, n={n}")
        return q, m


@dataclass
class EigenSystem:
    """Nystrom estimate of the top kernel eigensystem on an m-row subsample.

    eigenvalues are the top q eigenvalues of K_mm / m in descending order;
    tail_eigenvalue is the (q+1)-th. coeffs has one column per
    eigenfunction: psi_i(x) = sum_j coeffs[j, i] * k(x, subsample_j),
    normalized to unit RKHS norm.
    """

    eigenvalues: np.ndarray
    tail_eigenvalue: float
    coeffs: np.ndarray
    subsample: np.ndarray
    indices: np.ndarray


@dataclass
class KernelModel:
    """Support points plus coefficients: f(x) = sum_j alpha_j k(x, x_j)."""

    params: KernelParams
    support: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        if self.alpha.ndim == 1:
            self.alpha = self.alpha.reshape(-1, 1)
        if self.alpha.shape[0] != self.support.shape[0]:
            raise DataError(
                f"alpha rows ({self.alpha.shape[0]}) must match support rows "
                f"({self.support.shape[0]})"
            )


def estimate_eigensystem(
    X: np.ndarray,
    params: KernelParams,
    q: int,
    m: int,
    seed: int = 0,
) -> EigenSystem:
    """Top-q eigensystem of the kernel matrix on a random m-row subsample.

    Eigenvalues are scaled by 1/m so they estimate the kernel integral
    operator's spectrum. Deterministic given the seed. A degenerate
    (rank-deficient) subsample is retried once with fresh rows before the
    error surfaces.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if not 0 <= q < m:
        raise ConfigError(f"need 0 <= q < m, got q={q}, m={m}")
    if m > n:
        raise ConfigError(f"subsample size m={m} exceeds available rows n={n}")

    rng = np.random.default_rng(seed)
    err = None
    for _ in range(2):
        idx = np.sort(rng.choice(n, size=m, replace=False))
        sub = X[idx]
        kmat = kernel_matrix(params, sub, sub)
        try:
            vals, vecs = scipy.linalg.eigh(kmat, subset_by_index=[m - q - 1, m - 1])
        except scipy.linalg.LinAlgError as exc:  # pragma: no cover - rare
            err = NumericError(f"eigendecomposition failed on subsample: {exc}")
            continue
        if vals.shape[0] != q + 1:
            # dsyevr returns short on massively repeated eigenvalues
            # (e.g. a kernel matrix that underflowed to the identity)
            err = NumericError(
                f"eigensolver returned {vals.shape[0]} of {q + 1} requested "
                "eigenvalues: spectrum is degenerate at this bandwidth"
            )
            continue
        vals = vals[::-1] / m
        vecs = vecs[:, ::-1]
        tail = float(vals[q])
        top = float(vals[0])
        if not np.isfinite(tail) or tail <= max(top, 0.0) * _DEGENERATE_REL:
            err = NumericError(
                f"degenerate kernel spectrum on subsample: tail eigenvalue "
                f"{tail:.3e} (top {top:.3e}); reduce q or deduplicate data"
            )
            continue
        lam = vals[:q]
        coeffs = vecs[:, :q] / np.sqrt(lam * m) if q > 0 else np.zeros((m, 0))
        return EigenSystem(
            eigenvalues=lam,
            tail_eigenvalue=tail,
            coeffs=coeffs,
            subsample=sub,
            indices=idx,
        )
    raise err


def _predict_chunked(params, X, support, alpha, max_entries):
    n_sup = support.shape[0]
    rows = max(1, max_entries // max(n_sup, 1))
    out = np.empty((X.shape[0], alpha.shape[1]), dtype=np.float64)
    for lo in range(0, X.shape[0], rows):
        hi = min(lo + rows, X.shape[0])
        out[lo:hi] = kernel_matrix(params, X[lo:hi], support) @ alpha
    return out


def predict(
    model: KernelModel,
    X: np.ndarray,
    *,
    max_entries: int = DEFAULT_MAX_ENTRIES,
) -> np.ndarray:
    """Evaluate f(x) = sum_j alpha_j k(x, x_j) row-wise; no mutation."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.support.shape[1]:
        raise DataError(
            f"feature dimension mismatch: X has {X.shape[1]}, support has "
            f"{model.support.shape[1]}"
        )
    return _predict_chunked(model.params, X, model.support, model.alpha, max_entries)


def direct_solve(
    X: np.ndarray,
    Y: np.ndarray,
    params: KernelParams,
    ridge: float = 0.0,
    *,
    cap: int = DIRECT_SOLVE_CAP,
) -> KernelModel:
    """Solve (K + ridge*I) alpha = Y by Cholesky factorization.

    Small-data path and the oracle that iterative training is tested
    against. Refuses systems larger than `cap` rows.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    n = X.shape[0]
    if Y.shape[0] != n:
        raise DataError(f"X has {n} rows but Y has {Y.shape[0]}")
    if ridge < 0:
        raise ConfigError(f"ridge must be nonnegative, got {ridge}")
    if n > cap:
        raise ConfigError(f"direct_solve capped at {cap} rows, got {n}")

    A = kernel_matrix(params, X, X)
    if ridge:
        A[np.diag_indices_from(A)] += ridge
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        lam_min = float(np.linalg.eigvalsh(A)[0]) if n <= 2048 else float("nan")
        raise NumericError(
            f"factorization failed: kernel system is singular "
            f"(smallest eigenvalue {lam_min:.3e})"
        ) from None
    pivots = np.diag(L)
    if pivots.min() <= 1e-7 * pivots.max():
        raise NumericError(
            f"factorization failed: smallest pivot {pivots.min():.3e} "
            f"(largest {pivots.max():.3e}); system is numerically singular"
        )
    alpha = scipy.linalg.cho_solve((L, True), Y)
    return KernelModel(params=params, support=X, alpha=alpha)


def train(
    X: np.ndarray,
    Y: np.ndarray,
    params: KernelParams,
    cfg: SolverConfig,
    val: Optional[tuple[np.ndarray, np.ndarray]] = None,
    *,
    sq_dists: Optional[np.ndarray] = None,
    sq_dists_val: Optional[np.ndarray] = None,
    max_entries: int = DEFAULT_MAX_ENTRIES,
) -> tuple[KernelModel, list[float]]:
    """Fit a KernelModel by preconditioned stochastic iteration.

    Per batch B: g = K(B, support) @ alpha - Y_B, then
    alpha_B -= (eta/|B|) g and the rank-q correction adds
    (eta/|B|) * sum_i (1 - tail/lam_i) psi_i <psi_i(B), g> through the
    Nystrom eigenfunctions. Step size eta = step_scale * 2 / tail.

    loss_history records per-epoch validation MSE (training MSE when no
    validation set is given). Stops at max_epochs or after `patience`
    epochs without improvement; the best-epoch coefficients are returned.

    sq_dists / sq_dists_val optionally supply precomputed squared
    pairwise distances (train x train, val x train) so repeated trainings
    on the same rows skip the distance work.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    n = X.shape[0]
    if Y.shape[0] != n:
        raise DataError(f"X has {n} rows but Y has {Y.shape[0]}")
    if not np.all(np.isfinite(Y)):
        raise DataError("targets must be finite")
    q, m = cfg.resolve(n)

    eig_seed, batch_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    system = estimate_eigensystem(X, params, q, m, seed=eig_seed)
    eta = cfg.step_scale * 2.0 / system.tail_eigenvalue
    weights = (
        system.coeffs * np.sqrt(1.0 - system.tail_eigenvalue / system.eigenvalues)
        if q > 0
        else None
    )
    sub = system.indices

    if sq_dists is not None:
        kmat = kernel_from_sq_dists(params, sq_dists)
    elif n * n <= max_entries:
        kmat = kernel_matrix(params, X, X)
    else:
        kmat = None

    kval = None
    if val is not None:
        X_val, Y_val = val
        X_val = np.asarray(X_val, dtype=np.float64)
        Y_val = np.asarray(Y_val, dtype=np.float64)
        if Y_val.ndim == 1:
            Y_val = Y_val.reshape(-1, 1)
        if X_val.shape[1] != X.shape[1] or Y_val.shape[1] != Y.shape[1]:
            raise DataError("validation set dimensions do not match training set")
        if sq_dists_val is not None:
            kval = kernel_from_sq_dists(params, sq_dists_val)
        elif X_val.shape[0] * n <= max_entries:
            kval = kernel_matrix(params, X_val, X)

    rng = np.random.default_rng(batch_seed)
    alpha = np.zeros((n, Y.shape[1]), dtype=np.float64)
    history: list[float] = []
    best_loss = np.inf
    best_alpha = alpha.copy()
    since_best = 0

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            batch = order[lo : lo + cfg.batch_size]
            kb = (
                kmat[batch]
                if kmat is not None
                else kernel_matrix(params, X[batch], X, max_entries=max_entries)
            )
            g = kb @ alpha - Y[batch]
            step = eta / len(batch)
            alpha[batch] -= step * g
            if weights is not None:
                alpha[sub] += step * (weights @ (weights.T @ (kb[:, sub].T @ g)))

        # Overflow to inf is the divergence signal, not an error.
        with np.errstate(over="ignore"):
            if val is not None:
                pred = (
                    kval @ alpha
                    if kval is not None
                    else _predict_chunked(params, X_val, X, alpha, max_entries)
                )
                loss = float(np.mean((pred - Y_val) ** 2))
            else:
                pred = (
                    kmat @ alpha
                    if kmat is not None
                    else _predict_chunked(params, X, X, alpha, max_entries)
                )
                loss = float(np.mean((pred - Y) ** 2))
        if not np.isfinite(loss):
            raise NumericError(
                f"training diverged at epoch {epoch} (step size {eta:.4g}); "
                "lower step_scale or q, or raise batch_size"
            )
        history.append(loss)
        if loss < best_loss:
            best_loss = loss
            best_alpha = alpha.copy()
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break

    model = KernelModel(params=params, support=X, alpha=best_alpha)
    return model, history
