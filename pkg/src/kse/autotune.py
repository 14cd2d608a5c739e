"""Automatic kernel hyper-parameter selection.

A recursive four-point bracket search over the bandwidth sigma runs once
per shape parameter gamma in the grid, driven by a memoized
cross-validation loss so no (gamma, sigma) pair is ever trained twice.
The search recursion keeps the running minimum inside the bracket and
stops when the bracket is narrower than 2, returning its left edge.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .data import Dataset
from .eigenpro import SolverConfig, train
from .errors import ConfigError, NumericError
from .kernel import DEFAULT_MAX_ENTRIES, pairwise_sq_dists, validate_params

# Brackets at most this wide stop the recursion (absolute width, linear
# sigma scale; callers wanting log-scale search pass transformed brackets).
TERMINAL_WIDTH = 2.0

_MAX_DEPTH = 200


@dataclass(frozen=True)
class SearchSpace:
    """Gamma grid, sigma bracket, and subsample sizes for the tuner."""

    gammas: tuple[float, ...] = (0.5, 1.0, 2.0)
    sigma_lo: float = 1.0
    sigma_hi: float = 64.0
    subsample_train: int = 2000
    subsample_val: int = 1000
    seed: int = 0

    def validate(self) -> None:
        if not self.gammas:
            raise ConfigError("gamma grid must be non-empty")
        for g in self.gammas:
            if not 0.0 < g <= 2.0:
                raise ConfigError(f"gamma out of (0,2]: got {g}")
        if not self.sigma_lo < self.sigma_hi:
            raise ConfigError(
                f"need sigma_lo < sigma_hi, got [{self.sigma_lo}, {self.sigma_hi}]"
            )
        if self.subsample_train < 1 or self.subsample_val < 1:
            raise ConfigError("subsample sizes must be positive")


@dataclass
class TuneResult:
    """Selected (gamma, sigma) plus every evaluation in evaluation order."""

    gamma_opt: float
    sigma_opt: float
    evaluations: list[tuple[float, float, float]] = field(default_factory=list)


class CrossValidator:
    """Memoized validation loss for kernel models trained per (gamma, sigma).

    Each distinct (gamma, sigma) pair (exact bit equality) is trained at
    most once; repeats return the cached loss. Squared pairwise distances
    between the fixed train/validation rows are computed once up front so
    repeated trainings only pay for the kernel map and the iteration.
    A diverging configuration is recorded as an infinite loss instead of
    raising, which steers the search away from that region. Lookups and
    inserts are lock-protected and safe to call from worker threads.
    """

    def __init__(
        self,
        train_set: Dataset,
        val_set: Dataset,
        solver_cfg: SolverConfig,
        *,
        max_entries: int = DEFAULT_MAX_ENTRIES,
    ):
        if train_set.n_frames == 0 or val_set.n_frames == 0:
            raise ConfigError("cross-validation datasets must be non-empty")
        if train_set.X.shape[1] != val_set.X.shape[1]:
            raise ConfigError("train/validation feature dimensions differ")
        self.train_set = train_set
        self.val_set = val_set
        self.solver_cfg = solver_cfg
        self.train_count = 0
        self.memo: dict[tuple[float, float], float] = {}
        self.hits: dict[tuple[float, float], int] = {}
        self.evaluations: list[tuple[float, float, float]] = []
        self._lock = threading.Lock()
        nt, nv = train_set.n_frames, val_set.n_frames
        self._sq_tt = (
            pairwise_sq_dists(train_set.X, train_set.X)
            if nt * nt <= max_entries
            else None
        )
        self._sq_vt = (
            pairwise_sq_dists(val_set.X, train_set.X)
            if nv * nt <= max_entries
            else None
        )

    def loss(self, gamma: float, sigma: float) -> float:
        key = (float(gamma), float(sigma))
        with self._lock:
            if key in self.memo:
                self.hits[key] += 1
                return self.memo[key]
        params = validate_params(*key)
        try:
            _, history = train(
                self.train_set.X,
                self.train_set.Y,
                params,
                self.solver_cfg,
                val=(self.val_set.X, self.val_set.Y),
                sq_dists=self._sq_tt,
                sq_dists_val=self._sq_vt,
            )
            value = float(min(history))
        except NumericError:
            value = float("inf")
        with self._lock:
            self.memo[key] = value
            self.hits.setdefault(key, 0)
            self.evaluations.append((key[0], key[1], value))
            self.train_count += 1
        return value


def cross_validate(
    gamma: float,
    sigma: float,
    D_train: Dataset,
    D_val: Dataset,
    solver_cfg: SolverConfig,
    *,
    cache: Optional[CrossValidator] = None,
) -> float:
    """Train one kernel model with k_{gamma,sigma} and return its
    validation MSE. Pass a CrossValidator as `cache` to memoize across
    calls; without one, every call trains."""
    cv = cache if cache is not None else CrossValidator(D_train, D_val, solver_cfg)
    return cv.loss(gamma, sigma)


def search(
    f: Callable[[float], float],
    sigma_lo: float,
    sigma_hi: float,
    *,
    trace: Optional[list] = None,
) -> float:
    """Recursive four-point bracket descent over sigma.

    Brackets of width <= 2 return their left edge without evaluating f.
    Otherwise two interior points are placed, f is taken at all four
    points, and the recursion follows the bracket adjacent to the minimum:
    (lo, m1), (lo, m2), (m1, hi), or (m2, hi) for a minimum at lo, m1,
    m2, or hi respectively (first minimal value wins ties).

    Interior points reuse a previously evaluated sigma strictly inside the
    bracket when one exists; remaining points split the bracket into three
    parts as equal as possible. A reused point keeps its side: it becomes
    m1 when it falls in the left half, m2 otherwise, so the fresh point
    can rebalance the split (assigning reused points to m1 unconditionally
    can pin one bracket edge and stall the recursion).

    `trace` (optional list) receives one (lo, m1, m2, hi) tuple per
    evaluated level; len(trace) is the recursion depth.
    """
    sigma_lo = float(sigma_lo)
    sigma_hi = float(sigma_hi)
    if not sigma_lo < sigma_hi:
        raise ConfigError(f"need sigma_lo < sigma_hi, got [{sigma_lo}, {sigma_hi}]")

    seen: dict[float, float] = {}

    def evaluate(s: float) -> float:
        if s not in seen:
            seen[s] = float(f(s))
        return seen[s]

    def recurse(lo: float, hi: float, depth: int) -> float:
        if hi - lo <= TERMINAL_WIDTH:
            return lo
        if depth > _MAX_DEPTH:
            raise NumericError("bracket search failed to terminate")
        width = hi - lo
        inside = sorted(s for s in seen if lo < s < hi)
        if not inside:
            m1, m2 = lo + width / 3.0, lo + 2.0 * width / 3.0
        elif len(inside) == 1:
            p = inside[0]
            if p <= lo + 0.5 * width:
                m1, m2 = p, 0.5 * (p + hi)
            else:
                m1, m2 = 0.5 * (lo + p), p
        else:
            m1 = min(inside, key=lambda s: abs(s - (lo + width / 3.0)))
            right = [s for s in inside if s > m1]
            if right:
                m2 = min(right, key=lambda s: abs(s - (lo + 2.0 * width / 3.0)))
            else:
                m2 = 0.5 * (m1 + hi)
        points = (lo, m1, m2, hi)
        values = [evaluate(s) for s in points]
        if trace is not None:
            trace.append(points)
        if not any(np.isfinite(v) for v in values):
            raise NumericError(
                f"loss not finite at any bracket point of [{lo}, {hi}]"
            )
        best = min(range(4), key=values.__getitem__)
        if best == 0:
            return recurse(lo, m1, depth + 1)
        if best == 1:
            return recurse(lo, m2, depth + 1)
        if best == 2:
            return recurse(m1, hi, depth + 1)
        return recurse(m2, hi, depth + 1)

    return recurse(sigma_lo, sigma_hi, 1)


def make_validator(
    D_train: Dataset,
    D_val: Dataset,
    space: SearchSpace,
    solver_cfg: SolverConfig,
) -> CrossValidator:
    """The CrossValidator autotune would build: fixed subsamples of the
    stated sizes drawn once with the space's seed."""
    space.validate()
    rng = np.random.default_rng(space.seed)
    nt, nv = D_train.n_frames, D_val.n_frames
    ti = np.sort(rng.choice(nt, size=min(space.subsample_train, nt), replace=False))
    vi = np.sort(rng.choice(nv, size=min(space.subsample_val, nv), replace=False))
    return CrossValidator(D_train.subset(ti), D_val.subset(vi), solver_cfg)


def autotune(
    D_train: Dataset,
    D_val: Dataset,
    space: SearchSpace,
    solver_cfg: SolverConfig,
    *,
    cache: Optional[CrossValidator] = None,
) -> TuneResult:
    """Grid over gamma, bracket search over sigma, memoized throughout.

    Subsamples of the stated sizes are drawn once from each dataset with
    the space's seed and shared across every evaluation. The returned
    pair minimizes loss over the exact set of evaluated pairs; ties break
    toward the earlier gamma in the grid, then earlier evaluation. When a
    terminal-width bracket leaves a singleton grid with nothing evaluated,
    the (gamma, sigma_lo) pair is returned directly without training.

    Pass the previous run's CrossValidator as `cache` to carry the memo
    table across autotune calls over the same data and solver config.
    """
    space.validate()
    cv = cache if cache is not None else make_validator(D_train, D_val, space, solver_cfg)

    sigma_for = {}
    for gamma in space.gammas:
        sigma_for[gamma] = search(
            lambda s, g=gamma: cv.loss(g, s), space.sigma_lo, space.sigma_hi
        )

    if len(space.gammas) == 1 and not cv.evaluations:
        g0 = space.gammas[0]
        return TuneResult(gamma_opt=g0, sigma_opt=sigma_for[g0], evaluations=[])

    if len(space.gammas) > 1:
        for gamma in space.gammas:
            cv.loss(gamma, sigma_for[gamma])

    # a shared cache may hold evaluations for gammas outside this grid
    rank = {g: i for i, g in enumerate(space.gammas)}
    candidates = [
        i for i, (g, _, _) in enumerate(cv.evaluations) if g in rank
    ]
    if not candidates:
        g0 = space.gammas[0]
        return TuneResult(
            gamma_opt=g0, sigma_opt=sigma_for[g0],
            evaluations=list(cv.evaluations),
        )
    best = min(
        candidates,
        key=lambda i: (cv.evaluations[i][2], rank[cv.evaluations[i][0]], i),
    )
    g_opt, s_opt, _ = cv.evaluations[best]
    return TuneResult(
        gamma_opt=g_opt, sigma_opt=s_opt, evaluations=list(cv.evaluations)
    )
