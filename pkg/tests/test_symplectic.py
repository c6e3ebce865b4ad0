import numpy as np
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from reslat.symplectic import omega, standard_j, symplectic_defect, symplectic_gram_schmidt


def random_symplectic(rng, n, scale=0.5):
    # exp(J S) with S symmetric is symplectic
    S = rng.normal(scale=scale, size=(2 * n, 2 * n))
    return expm(standard_j(n) @ (S + S.T) / 2)


def test_standard_j_pairing():
    J = standard_j(2)
    e = np.eye(4)
    assert omega(e[0], e[2], J) == 1.0
    assert omega(e[2], e[0], J) == -1.0
    assert np.allclose(J @ J, -np.eye(4))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_random_exponential_is_symplectic(seed, n):
    A = random_symplectic(np.random.default_rng(seed), n)
    assert symplectic_defect(A) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_gram_schmidt_returns_symplectic_basis(seed, n):
    rng = np.random.default_rng(seed)
    J = standard_j(n)
    V = rng.normal(size=(2 * n, 2 * n))
    S = symplectic_gram_schmidt(V, J)
    assert S.shape == (2 * n, 2 * n)
    assert np.max(np.abs(S.T @ J @ S - J)) < 1e-8


def test_gram_schmidt_drops_null_directions():
    J = standard_j(2)
    V = np.eye(4)[:, [0, 2, 1]]
    S = symplectic_gram_schmidt(V, J)
    assert S.shape == (4, 2)
    assert np.allclose(S.T @ J @ S, standard_j(1))
