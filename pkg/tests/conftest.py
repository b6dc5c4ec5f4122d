import numpy as np
import pytest

from ogfm import ProblemData, build_grouping


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def make_problem(rng, n=40, p=4, K=3, noise=0.5, density=0.6, **kwargs):
    """Random dense regression instance with a sparse ground truth."""
    X = rng.standard_normal((n, p))
    beta = rng.standard_normal((p, K)) * (rng.random((p, K)) < density)
    Y = X @ beta + noise * rng.standard_normal((n, K))
    return ProblemData(X, Y, **kwargs), beta


def default_grouping(K, mid=None):
    """Full hierarchy with one middle level (defaults to a split in two)."""
    if mid is None:
        half = max(1, K // 2)
        mid = [tuple(range(half)), tuple(range(half, K))] if K > 1 else [(0,)]
    return build_grouping(K, [mid])
