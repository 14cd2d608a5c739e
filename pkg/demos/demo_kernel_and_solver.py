"""Exponential power kernels and the preconditioned solver.

Walks through the kernel family (Gaussian and Laplacian special cases,
the non-smooth gamma < 1 regime), checks positive definiteness the hard
way, and races the iterative solver against a dense factorization.

Run:  python3 demos/demo_kernel_and_solver.py
"""
import numpy as np

from kse import (
    SolverConfig,
    direct_solve,
    eval_kernel,
    kernel_matrix,
    predict,
    train,
    validate_params,
)

rng = np.random.default_rng(0)

print("=== kernel values along a ray ===")
x = np.zeros(4)
for gamma in (0.5, 1.0, 2.0):
    params = validate_params(gamma, 2.0)
    row = [eval_kernel(params, x, np.full(4, r / np.sqrt(4))) for r in (0.5, 1, 2, 4)]
    print(f"gamma={gamma:3.1f}:  " + "  ".join(f"{v:.4f}" for v in row))
print("gamma=2 is the Gaussian kernel, gamma=1 the Laplacian; smaller gamma")
print("decays faster near zero distance and slower far away.\n")

print("=== positive definiteness, checked by eigendecomposition ===")
X = rng.standard_normal((200, 8))
for gamma in (0.5, 1.0, 2.0):
    K = kernel_matrix(validate_params(gamma, 3.0), X, X)
    eig = np.linalg.eigvalsh(K)
    print(f"gamma={gamma:3.1f}: eigenvalues in [{eig[0]:.2e}, {eig[-1]:.2e}]")
print()

print("=== iterative solver vs dense factorization ===")
n, d = 1500, 12
X = rng.standard_normal((n, d))
centers = rng.standard_normal((50, d))
params = validate_params(1.0, 6.0)
Y = kernel_matrix(params, X, centers) @ rng.standard_normal((50, 1))

cfg = SolverConfig(q=120, m=n, batch_size=750, max_epochs=30, patience=30, seed=0)
model, history = train(X, Y, params, cfg)
print("training MSE per epoch:")
for i, loss in enumerate(history[:10]):
    print(f"  epoch {i:2d}: {loss:.3e}")
if len(history) > 10:
    print(f"  ... epoch {len(history) - 1}: {history[-1]:.3e}")

oracle = direct_solve(X[:1500], Y[:1500], params, ridge=1e-8)
rel = np.linalg.norm(predict(model, X) - predict(oracle, X)) / np.linalg.norm(
    predict(oracle, X)
)
print(f"\nrelative RMS gap to the dense solution: {rel:.2e}")
print("The rank-q spectral correction is what lets a handful of epochs")
print("match the dense solve; set q=0 in SolverConfig to watch plain")
print("stochastic kernel gradient descent crawl instead.")
