"""Kernel formula, matrix construction, and positive definiteness."""

import math

import numpy as np
import pytest

from kse.errors import ConfigError, DataError, MemoryBudgetError
from kse.kernel import (
    KernelParams,
    eval_kernel,
    kernel_matrix,
    validate_params,
)


class TestValidateParams:
    def test_in_range_values_pass(self):
        p = validate_params(1.0, 2.0)
        assert p == KernelParams(gamma=1.0, sigma=2.0)

    def test_gamma_above_two_rejected(self):
        with pytest.raises(ConfigError, match="gamma"):
            validate_params(2.5, 1.0)

    def test_gamma_zero_rejected(self):
        with pytest.raises(ConfigError, match="gamma"):
            validate_params(0.0, 1.0)

    def test_sigma_zero_rejected(self):
        with pytest.raises(ConfigError, match="sigma"):
            validate_params(0.5, 0.0)

    def test_non_finite_rejected(self):
        with pytest.raises(ConfigError, match="gamma"):
            validate_params(float("nan"), 1.0)
        with pytest.raises(ConfigError, match="sigma"):
            validate_params(1.0, float("inf"))


class TestEvalKernel:
    def test_zero_distance_is_one(self):
        x = np.array([0.3, -1.2, 4.0])
        for gamma, sigma in [(0.5, 3.0), (1.0, 1.0), (2.0, 0.2)]:
            assert eval_kernel(validate_params(gamma, sigma), x, x) == 1.0

    def test_gaussian_special_case(self):
        # gamma=2, sigma=1, ||x-z|| = 1 -> e^-1
        p = validate_params(2.0, 1.0)
        v = eval_kernel(p, np.array([0.0, 0.0]), np.array([1.0, 0.0]))
        assert v == pytest.approx(math.exp(-1.0), rel=1e-12)

    def test_nonsmooth_regime_closed_form(self):
        # gamma=0.5, sigma=2, ||x-z|| = 4 -> exp(-4^0.5 / 2) = e^-1
        p = validate_params(0.5, 2.0)
        v = eval_kernel(p, np.array([0.0]), np.array([4.0]))
        assert v == pytest.approx(math.exp(-1.0), rel=1e-12)

    def test_dimension_mismatch(self):
        p = validate_params(1.0, 1.0)
        with pytest.raises(DataError):
            eval_kernel(p, np.zeros(3), np.zeros(4))


class TestKernelMatrix:
    def test_unit_diagonal_exact(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((40, 6))
        for gamma in (0.5, 1.0, 2.0):
            K = kernel_matrix(validate_params(gamma, 1.7), X, X)
            assert np.all(np.diag(K) == 1.0)

    def test_symmetry_exact(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((73, 5))
        K = kernel_matrix(validate_params(0.7, 2.3), X, X)
        assert np.array_equal(K, K.T)

    def test_duplicate_rows_give_identical_rows(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((20, 4))
        X[7] = X[3]
        K = kernel_matrix(validate_params(1.0, 2.0), X, X)
        assert np.array_equal(K[3], K[7])
        assert K[3, 7] == 1.0

    def test_entries_in_unit_interval(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((30, 8))
        Z = rng.standard_normal((25, 8))
        K = kernel_matrix(validate_params(0.5, 1.0), X, Z)
        assert np.all(K > 0.0)
        assert np.all(K <= 1.0)
        # distinct rows stay strictly below 1
        assert np.all(K < 1.0)

    def test_monotone_decreasing_in_distance(self):
        X = np.zeros((1, 1))
        Z = np.linspace(0.1, 5.0, 40).reshape(-1, 1)
        for gamma in (0.5, 1.0, 2.0):
            row = kernel_matrix(validate_params(gamma, 2.0), X, Z)[0]
            assert np.all(np.diff(row) < 0.0)

    def test_positive_semidefinite_random_sets(self):
        # Oracle: dense symmetric eigendecomposition of the 50x50 matrix.
        rng = np.random.default_rng(4)
        for gamma in (0.5, 1.0, 2.0):
            p = validate_params(gamma, 3.0)
            for _ in range(10):
                X = rng.standard_normal((50, 8))
                K = kernel_matrix(p, X, X)
                w = np.linalg.eigvalsh(K)
                assert w[0] >= -1e-8 * w[-1]

    def test_gaussian_reference_formula(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((12, 3))
        Z = rng.standard_normal((9, 3))
        sigma = 2.5
        K = kernel_matrix(validate_params(2.0, sigma), X, Z)
        ref = np.exp(
            -(((X[:, None, :] - Z[None, :, :]) ** 2).sum(-1)) / sigma
        )
        np.testing.assert_allclose(K, ref, rtol=1e-12, atol=1e-15)

    def test_laplacian_reference_formula(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((12, 3))
        Z = rng.standard_normal((9, 3))
        sigma = 1.5
        K = kernel_matrix(validate_params(1.0, sigma), X, Z)
        ref = np.exp(
            -np.sqrt(((X[:, None, :] - Z[None, :, :]) ** 2).sum(-1)) / sigma
        )
        np.testing.assert_allclose(K, ref, rtol=1e-12, atol=1e-15)

    def test_cross_matrix_matches_eval_kernel(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((6, 4))
        Z = rng.standard_normal((5, 4))
        p = validate_params(0.8, 1.3)
        K = kernel_matrix(p, X, Z)
        for i in range(6):
            for j in range(5):
                assert K[i, j] == pytest.approx(
                    eval_kernel(p, X[i], Z[j]), rel=1e-12
                )

    def test_dimension_mismatch(self):
        p = validate_params(1.0, 1.0)
        with pytest.raises(DataError):
            kernel_matrix(p, np.zeros((3, 2)), np.zeros((3, 5)))

    def test_memory_budget(self):
        p = validate_params(1.0, 1.0)
        X = np.zeros((100, 2))
        with pytest.raises(MemoryBudgetError):
            kernel_matrix(p, X, X, max_entries=100 * 100 - 1)

    def test_worker_count_does_not_change_bits(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((4100, 7))  # spans multiple row blocks
        Z = rng.standard_normal((60, 7))
        p = validate_params(0.6, 2.0)
        a = kernel_matrix(p, Z, X, workers=1)
        b = kernel_matrix(p, Z, X, workers=2)
        assert np.array_equal(a, b)
        c = kernel_matrix(p, X, X, workers=1)
        d = kernel_matrix(p, X, X, workers=2)
        assert np.array_equal(c, d)
