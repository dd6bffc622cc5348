import numpy as np
import pytest

from shiftnets.numerics import make_rng


@pytest.fixture
def rng():
    return make_rng(12345)


def random_shift(rng, n, symmetric=True, normalize=True):
    a = rng.random((n, n))
    if symmetric:
        a = np.triu(a, 1)
        a = a + a.T
    else:
        np.fill_diagonal(a, 0.0)
    if normalize:
        a = a / np.max(np.abs(np.linalg.eigvals(a)))
    return a


def random_perm_matrix(rng, n):
    perm = rng.permutation(n)
    p = np.zeros((n, n))
    p[perm, np.arange(n)] = 1.0
    return perm, p
