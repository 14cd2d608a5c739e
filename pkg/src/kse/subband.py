"""Per-subband kernel models over contiguous frequency-channel blocks.

The target channels are split into b contiguous ranges; each range gets
its own kernel, tuned on subsamples and trained on the full data, and
predictions are reassembled in channel order.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .autotune import SearchSpace, TuneResult, autotune
from .data import Dataset
from .eigenpro import KernelModel, SolverConfig, predict, train
from .errors import ConfigError, DataError, KseError
from .kernel import DEFAULT_MAX_ENTRIES, pairwise_sq_dists, validate_params


@dataclass(frozen=True)
class ChannelPartition:
    """Ordered half-open channel ranges covering [0, n_channels)."""

    n_channels: int
    bounds: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not self.bounds:
            raise ConfigError("partition needs at least one range")
        cursor = 0
        for start, end in self.bounds:
            if start != cursor or end <= start:
                raise ConfigError(
                    f"ranges must be contiguous, ordered, non-empty; got "
                    f"{self.bounds}"
                )
            cursor = end
        if cursor != self.n_channels:
            raise ConfigError(
                f"ranges cover [0, {cursor}) but n_channels is {self.n_channels}"
            )

    @property
    def n_subbands(self) -> int:
        return len(self.bounds)


def make_partition(n_channels: int, b: int) -> ChannelPartition:
    """Split channels into b contiguous ranges with widths differing by at
    most one; remainder channels go to the lowest-index subbands."""
    if not 1 <= b <= n_channels:
        raise ConfigError(f"need 1 <= b <= n_channels, got b={b}, n={n_channels}")
    base, rem = divmod(n_channels, b)
    bounds = []
    start = 0
    for i in range(b):
        width = base + (1 if i < rem else 0)
        bounds.append((start, start + width))
        start += width
    return ChannelPartition(n_channels=n_channels, bounds=tuple(bounds))


@dataclass
class SubbandModel:
    """One KernelModel per channel range, in partition order."""

    partition: ChannelPartition
    models: list[KernelModel]
    tune_results: list[TuneResult]
    loss_histories: list[list[float]] = field(default_factory=list)

    def __post_init__(self):
        if len(self.models) != self.partition.n_subbands or len(
            self.tune_results
        ) != self.partition.n_subbands:
            raise DataError("one model and one tune result per subband required")
        for model, (start, end) in zip(self.models, self.partition.bounds):
            if model.alpha.shape[1] != end - start:
                raise DataError(
                    f"model for range [{start},{end}) predicts "
                    f"{model.alpha.shape[1]} channels"
                )


def train_subband(
    X_train: np.ndarray,
    Y_train: np.ndarray,
    X_val: np.ndarray,
    Y_val: np.ndarray,
    b: int,
    space: SearchSpace,
    cfg: SolverConfig,
    *,
    workers: int = 1,
    max_entries: int = DEFAULT_MAX_ENTRIES,
) -> SubbandModel:
    """Tune and train one kernel model per subband.

    Every subband slices its own target columns, runs autotune on
    subsamples with the shared SearchSpace, then trains on the full
    training rows with the selected kernel. Pairwise distances between
    the full training rows are computed once and shared across subbands.
    Subband jobs are independent; `workers` > 1 runs them on threads.
    """
    X_train = np.asarray(X_train, dtype=np.float64)
    Y_train = np.asarray(Y_train, dtype=np.float64)
    X_val = np.asarray(X_val, dtype=np.float64)
    Y_val = np.asarray(Y_val, dtype=np.float64)
    if Y_train.ndim != 2:
        raise DataError("Y_train must be 2-d (frames x channels)")
    n_channels = Y_train.shape[1]
    if Y_val.shape[1] != n_channels:
        raise DataError("Y_val channel count differs from Y_train")
    partition = make_partition(n_channels, b)

    n = X_train.shape[0]
    sq_tt = pairwise_sq_dists(X_train, X_train) if n * n <= max_entries else None
    sq_vt = (
        pairwise_sq_dists(X_val, X_train)
        if X_val.shape[0] * n <= max_entries
        else None
    )

    def fit_one(i: int):
        start, end = partition.bounds[i]
        try:
            yb_t = Y_train[:, start:end]
            yb_v = Y_val[:, start:end]
            tune = autotune(
                Dataset(X_train, yb_t), Dataset(X_val, yb_v), space, cfg
            )
            params = validate_params(tune.gamma_opt, tune.sigma_opt)
            model, history = train(
                X_train,
                yb_t,
                params,
                cfg,
                val=(X_val, yb_v),
                sq_dists=sq_tt,
                sq_dists_val=sq_vt,
                max_entries=max_entries,
            )
        except KseError as exc:
            raise type(exc)(f"subband {i} [{start},{end}): {exc}") from exc
        return tune, model, history

    if workers > 1 and partition.n_subbands > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fit_one, range(partition.n_subbands)))
    else:
        results = [fit_one(i) for i in range(partition.n_subbands)]

    return SubbandModel(
        partition=partition,
        models=[r[1] for r in results],
        tune_results=[r[0] for r in results],
        loss_histories=[r[2] for r in results],
    )


def predict_mask(
    model: SubbandModel,
    X: np.ndarray,
    *,
    max_entries: int = DEFAULT_MAX_ENTRIES,
) -> np.ndarray:
    """Concatenate per-subband predictions in partition order, clipped to
    [0, 1] so the output is a valid gain mask."""
    parts = [predict(m, X, max_entries=max_entries) for m in model.models]
    mask = np.concatenate(parts, axis=1)
    np.clip(mask, 0.0, 1.0, out=mask)
    return mask


def binarize_mask(mask: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """1 where mask >= threshold, else 0."""
    mask = np.asarray(mask)
    if not np.all(np.isfinite(mask)):
        raise DataError("mask values must be finite")
    return (mask >= threshold).astype(np.float64)
