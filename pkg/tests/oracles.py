"""Brute-force references that share no code with the package."""

import itertools

import numpy as np


def stump_candidates(X):
    """Every sign stump (plus the two constants) as a vector of values at the samples."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    out = [np.ones(n), -np.ones(n)]
    for j in range(d):
        xs = np.unique(X[:, j])
        for thr in (xs[:-1] + xs[1:]) / 2:
            left = X[:, j] <= thr
            for a, b in itertools.product((-1.0, 1.0), repeat=2):
                out.append(np.where(left, a, b))
    return out


def best_stump_objective(X, w, r):
    wr = np.asarray(w) * np.asarray(r)
    return max(float(np.dot(wr, f)) for f in stump_candidates(X))


def scalar_argmin(f, lo, hi, n=20001, rounds=6):
    """Grid search refined around the best point; slow but assumption free."""
    for _ in range(rounds):
        xs = np.linspace(lo, hi, n)
        vals = np.array([f(x) for x in xs])
        i = int(np.argmin(vals))
        step = xs[1] - xs[0]
        lo, hi = xs[max(i - 1, 0)] - step, xs[min(i + 1, n - 1)] + step
    return xs[i]
