"""Shared construction helpers for the test suite."""

import numpy as np
import pytest

from mlpagerank import Problem, Tensor3, force_sum_one


def exact_stochastic_unfolding(rng, n, density=1.0):
    """Random n x n^2 unfolding whose columns sum to 1.0 in binary64 exactly.

    Near alpha = 1/2 the solvers respond to one-ulp column defects at the
    sqrt level, so test instances are built stochastic to the last bit: after
    normalization the largest entry of each column absorbs the leftover.
    """
    U = rng.random((n, n * n))
    if density < 1.0:
        mask = rng.random((n, n * n)) < density
        U = U * mask
        empty = ~mask.any(axis=0)
        U[rng.integers(0, n, size=int(empty.sum())), np.nonzero(empty)[0]] = 1.0
    U /= U.sum(axis=0)[None, :]
    for c in range(n * n):
        imax = int(np.argmax(U[:, c]))
        for _ in range(5):
            excess = U[:, c].sum() - 1.0
            if excess == 0.0:
                break
            U[imax, c] -= excess
    return U


def random_pagerank_problem(rng, n, alpha, density=1.0):
    U = exact_stochastic_unfolding(rng, n, density)
    v = rng.random(n) + 0.05
    v = force_sum_one(v / v.sum())
    return Problem.from_pagerank(v, Tensor3.from_unfolding(U), alpha)


@pytest.fixture
def rng():
    return np.random.default_rng(20240801)
