"""Automatic kernel parameter selection.

Shows the four-point bracket recursion on a toy function, then tunes
(gamma, sigma) for a synthetic regression problem whose generating kernel
is known, with the memoization counter on display.

Run:  python3 demos/demo_bandwidth_search.py
"""
import numpy as np

from kse import Dataset, SearchSpace, SolverConfig, autotune, kernel_matrix, search, validate_params
from kse.autotune import make_validator

print("=== bracket recursion on f(sigma) = (sigma - 10)^2 ===")
trace = []
calls = []


def f(s):
    calls.append(s)
    return (s - 10.0) ** 2


best = search(f, 2.0, 30.0, trace=trace)
for lo, m1, m2, hi in trace:
    print(
        f"  bracket [{lo:6.2f}, {hi:6.2f}]  interior ({m1:6.2f}, {m2:6.2f})"
    )
print(f"returned sigma = {best:.2f} after {len(set(calls))} distinct evaluations")
print("(brackets narrower than 2 stop the recursion and return the left edge)\n")

print("=== tuning against a known generating kernel ===")
rng = np.random.default_rng(1)
d = 6
X = rng.standard_normal((600, d))
Xv = rng.standard_normal((250, d))
centers = rng.standard_normal((40, d))
w = rng.standard_normal((40, 3))
true_params = validate_params(1.0, 8.0)
train_set = Dataset(X, kernel_matrix(true_params, X, centers) @ w)
val_set = Dataset(Xv, kernel_matrix(true_params, Xv, centers) @ w)

space = SearchSpace(
    gammas=(0.5, 1.0, 2.0), sigma_lo=1.0, sigma_hi=64.0,
    subsample_train=600, subsample_val=250, seed=7,
)
solver = SolverConfig(q=40, m=400, batch_size=600, max_epochs=15, patience=3, seed=0)
cache = make_validator(train_set, val_set, space, solver)
result = autotune(train_set, val_set, space, solver, cache=cache)

print(f"data generated with gamma=1.0 sigma=8.0")
print(f"selected             gamma={result.gamma_opt:g} sigma={result.sigma_opt:g}\n")
print("evaluation table (one training per row, repeats were cache hits):")
print("  gamma   sigma      val loss   cache hits")
for gamma, sigma, loss in result.evaluations:
    hits = cache.hits[(gamma, sigma)]
    print(f"  {gamma:5.2f}  {sigma:6.2f}  {loss:12.4e}   {hits}")
print(f"\ntrainings: {cache.train_count} for {len(result.evaluations)} table rows")
