import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose

import linsolve
from errors import FactorizationError, ParameterError


# ============================================================
# Helpers
# ============================================================

def _poisson_1d(n: int) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tocsr()


def _poisson_2d(n: int) -> sp.csr_matrix:
    eye = sp.identity(n)
    return (sp.kron(eye, _poisson_1d(n)) + sp.kron(_poisson_1d(n), eye)).tocsr()


def _shuffled(A: sp.csr_matrix, seed: int = 0) -> sp.csr_matrix:
    p = np.random.default_rng(seed).permutation(A.shape[0])
    return A[p][:, p].tocsr()


# ============================================================
# Ordering
# ============================================================

def test_bandwidth_of_tridiagonal():
    assert linsolve.bandwidth(_poisson_1d(10)) == 1
    assert linsolve.bandwidth(sp.csr_matrix((4, 4))) == 0


def test_rcm_recovers_narrow_band():
    A = _shuffled(_poisson_1d(40))
    q = linsolve.rcm_permutation(A)
    assert sorted(q) == list(range(40))
    stats = linsolve.band_stats(A, q)
    assert stats.bandwidth_after == 1
    assert stats.bandwidth_before > stats.bandwidth_after


def test_rcm_shrinks_grid_laplacian():
    A = _shuffled(_poisson_2d(12), seed=3)
    stats = linsolve.band_stats(A, linsolve.rcm_permutation(A))
    assert stats.bandwidth_after <= 2 * 12
    assert stats.nnz == A.nnz


def test_rcm_needs_square_matrix():
    with pytest.raises(ParameterError):
        linsolve.rcm_permutation(sp.csr_matrix(np.ones((2, 3))))


# ============================================================
# Factorization and solves
# ============================================================

def test_discrete_parabola():
    n = 50
    h = 1.0 / (n + 1)
    fact = linsolve.factorize(_poisson_1d(n))
    x = linsolve.solve(fact, np.full(n, h * h))
    grid = h * np.arange(1, n + 1)
    assert_allclose(x, 0.5 * grid * (1 - grid), atol=1e-10)


def test_random_spd_roundtrip():
    rng = np.random.default_rng(1)
    B = sp.random(200, 200, density=0.03, random_state=2)
    A = (B @ B.T + 10 * sp.identity(200)).tocsr()
    y = rng.standard_normal(200)
    fact = linsolve.factorize(A)
    assert_allclose(linsolve.solve(fact, A @ y), y, rtol=1e-9, atol=1e-9)
    assert fact.solve_count == 1
    assert fact.fill_in >= 0


def test_solve_timing_is_a_running_summary():
    fact = linsolve.factorize(_poisson_1d(20))
    assert np.isnan(fact.mean_solve_seconds)
    for _ in range(50):
        linsolve.solve(fact, np.ones(20))
    assert fact.solve_count == 50
    assert fact.solve_total_seconds > 0
    assert fact.mean_solve_seconds == pytest.approx(fact.solve_total_seconds / 50)
    assert not any(isinstance(v, list) for v in vars(fact).values())


def test_several_right_hand_sides():
    A = _poisson_2d(6)
    Y = np.random.default_rng(4).standard_normal((36, 3))
    fact = linsolve.factorize(A, linsolve.rcm_permutation(A))
    assert_allclose(linsolve.solve(fact, A @ Y), Y, atol=1e-10)
    with pytest.raises(ParameterError):
        linsolve.solve(fact, np.ones(35))


def test_singular_neumann_matrix():
    A = _poisson_1d(20).tolil()
    A[0, 0] = A[-1, -1] = 1.0
    with pytest.raises(FactorizationError):
        linsolve.factorize(A.tocsr())


def test_indefinite_matrix():
    with pytest.raises(FactorizationError):
        linsolve.factorize(sp.diags([1.0, -2.0, 3.0]).tocsr())
