"""Bracket search, memoized cross-validation, and the full tuner."""

import numpy as np
import pytest

from kse.autotune import (
    CrossValidator,
    SearchSpace,
    autotune,
    cross_validate,
    search,
)
from kse.data import Dataset
from kse.eigenpro import SolverConfig
from kse.errors import ConfigError, NumericError
from kse.kernel import kernel_matrix, validate_params


class CountingFn:
    def __init__(self, fn):
        self.fn = fn
        self.calls = []

    def __call__(self, s):
        self.calls.append(s)
        return self.fn(s)

    @property
    def distinct(self):
        return len(set(self.calls))


class TestSearch:
    def test_parabola_bracket(self):
        f = CountingFn(lambda s: (s - 10.0) ** 2)
        trace = []
        got = search(f, 2.0, 30.0, trace=trace)
        assert abs(got - 10.0) <= 2.0
        depth = len(trace)
        assert f.distinct <= 2 + 2 * depth
        # after the first level at most two fresh points per level
        assert f.distinct <= 4 + 2 * (depth - 1)

    def test_terminal_bracket_returns_left_edge(self):
        f = CountingFn(lambda s: s)
        assert search(f, 5.0, 7.0) == 5.0
        assert f.calls == []

    def test_increasing_function_walks_left(self):
        f = CountingFn(lambda s: 3.0 * s + 1.0)
        trace = []
        got = search(f, 2.0, 30.0, trace=trace)
        assert got <= 2.0 + 2.0
        # every level's minimum sits at the left edge
        for lo, m1, m2, hi in trace:
            assert f.fn(lo) == min(f.fn(lo), f.fn(m1), f.fn(m2), f.fn(hi))

    def test_all_infinite_aborts(self):
        with pytest.raises(NumericError, match="not finite"):
            search(lambda s: float("inf"), 0.0, 30.0)

    def test_partial_infinite_survives(self):
        f = lambda s: float("inf") if s < 15 else (s - 20.0) ** 2
        got = search(f, 2.0, 30.0)
        assert abs(got - 20.0) <= 4.0

    def test_invalid_bracket(self):
        with pytest.raises(ConfigError):
            search(lambda s: s, 5.0, 5.0)


def regression_datasets(n_train=300, n_val=120, d=6, gamma=1.0, sigma=8.0, seed=0):
    """Targets generated by a known exponential power kernel model."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_train, d))
    Xv = rng.standard_normal((n_val, d))
    centers = rng.standard_normal((30, d))
    w = rng.standard_normal((30, 2))
    p = validate_params(gamma, sigma)
    Y = kernel_matrix(p, X, centers) @ w
    Yv = kernel_matrix(p, Xv, centers) @ w
    return Dataset(X, Y), Dataset(Xv, Yv)


def quick_cfg(**kw):
    base = dict(q=20, m=150, batch_size=150, max_epochs=12, patience=3, seed=0)
    base.update(kw)
    return SolverConfig(**base)


class TestCrossValidator:
    def test_memoized_repeat_trains_once(self):
        dt, dv = regression_datasets()
        cv = CrossValidator(dt, dv, quick_cfg())
        a = cv.loss(1.0, 8.0)
        assert cv.train_count == 1
        b = cv.loss(1.0, 8.0)
        assert b == a
        assert cv.train_count == 1
        assert cv.hits[(1.0, 8.0)] == 1

    def test_interpolating_model_near_zero_loss(self):
        dt, _ = regression_datasets(n_train=150)
        cv = CrossValidator(dt, dt, quick_cfg(q=60, m=150, max_epochs=40))
        assert cv.loss(1.0, 8.0) <= 1e-4

    def test_divergence_becomes_inf_sentinel(self):
        dt, dv = regression_datasets(n_train=120, n_val=60)
        cfg = quick_cfg(
            q=0, m=120, batch_size=20, max_epochs=200, patience=200,
            step_scale=1e4,
        )
        cv = CrossValidator(dt, dv, cfg)
        assert cv.loss(1.0, 8.0) == float("inf")
        assert cv.evaluations[-1][2] == float("inf")

    def test_bare_cross_validate_function(self):
        dt, dv = regression_datasets(n_train=120, n_val=60)
        loss = cross_validate(1.0, 8.0, dt, dv, quick_cfg(m=120))
        assert np.isfinite(loss)


class TestAutotune:
    def test_singleton_gamma_narrow_bracket_trains_nothing(self):
        dt, dv = regression_datasets(n_train=100, n_val=50)
        space = SearchSpace(gammas=(1.0,), sigma_lo=6.0, sigma_hi=8.0, seed=1)
        cv = CrossValidator(dt, dv, quick_cfg(m=100))
        result = autotune(dt, dv, space, quick_cfg(m=100), cache=cv)
        assert result.gamma_opt == 1.0
        assert result.sigma_opt == 6.0
        assert result.evaluations == []
        assert cv.train_count == 0

    def test_singleton_gamma_monotone_loss(self):
        # With these targets the loss improves toward larger sigma, so the
        # argmin over evaluations and the search result coincide.
        dt, dv = regression_datasets(seed=2)
        space = SearchSpace(
            gammas=(1.0,), sigma_lo=0.5, sigma_hi=12.0,
            subsample_train=300, subsample_val=120, seed=2,
        )
        result = autotune(dt, dv, space, quick_cfg())
        assert result.gamma_opt == 1.0
        losses = {(g, s): v for g, s, v in result.evaluations}
        assert losses[(1.0, result.sigma_opt)] == min(losses.values())

    def test_returned_pair_minimizes_evaluated_losses(self):
        dt, dv = regression_datasets(seed=3)
        space = SearchSpace(
            gammas=(0.5, 1.0, 2.0), sigma_lo=1.0, sigma_hi=64.0,
            subsample_train=300, subsample_val=120, seed=3,
        )
        result = autotune(dt, dv, space, quick_cfg())
        best = min(v for _, _, v in result.evaluations)
        mine = [
            v
            for g, s, v in result.evaluations
            if g == result.gamma_opt and s == result.sigma_opt
        ]
        assert mine and mine[0] == best

    def test_deterministic(self):
        dt, dv = regression_datasets(seed=4)
        space = SearchSpace(
            gammas=(0.5, 1.0), sigma_lo=1.0, sigma_hi=32.0,
            subsample_train=200, subsample_val=100, seed=4,
        )
        r1 = autotune(dt, dv, space, quick_cfg())
        r2 = autotune(dt, dv, space, quick_cfg())
        assert r1 == r2

    def test_memo_survives_overlapping_brackets(self):
        dt, dv = regression_datasets(seed=5)
        cfg = quick_cfg()
        rng = np.random.default_rng(5)
        ti = np.sort(rng.choice(dt.n_frames, 200, replace=False))
        vi = np.sort(rng.choice(dv.n_frames, 100, replace=False))
        cv = CrossValidator(dt.subset(ti), dv.subset(vi), cfg)
        space1 = SearchSpace(
            gammas=(1.0,), sigma_lo=1.0, sigma_hi=28.0,
            subsample_train=200, subsample_val=100, seed=5,
        )
        autotune(dt, dv, space1, cfg, cache=cv)
        first = cv.train_count
        keys_before = set(cv.memo)
        space2 = SearchSpace(
            gammas=(1.0,), sigma_lo=1.0, sigma_hi=28.0,
            subsample_train=200, subsample_val=100, seed=5,
        )
        autotune(dt, dv, space2, cfg, cache=cv)
        # identical bracket: every pair is already memoized
        assert cv.train_count == first
        assert set(cv.memo) == keys_before

    def test_space_validation(self):
        with pytest.raises(ConfigError):
            SearchSpace(gammas=()).validate()
        with pytest.raises(ConfigError):
            SearchSpace(gammas=(2.5,)).validate()
        with pytest.raises(ConfigError):
            SearchSpace(sigma_lo=4.0, sigma_hi=4.0).validate()
