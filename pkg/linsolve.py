# linsolve.py
"""
Reverse Cuthill-McKee ordering and a reusable sparse direct factorization
of the (symmetric positive definite) Laplace system.
"""
import logging
import threading
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import splu

from errors import FactorizationError, ParameterError

logger = logging.getLogger(__name__)

SINGULAR_PIVOT_RATIO = 1e-13


# --- Ordering ---

def bandwidth(A) -> int:
    """Largest |i - j| over the stored nonzeros."""
    coo = sp.coo_matrix(A)
    if coo.nnz == 0:
        return 0
    mask = coo.data != 0
    if not mask.any():
        return 0
    return int(np.max(np.abs(coo.row[mask] - coo.col[mask])))


def rcm_permutation(A) -> np.ndarray:
    """Reverse Cuthill-McKee order; disconnected graphs are ordered per component."""
    A = sp.csr_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ParameterError(f"ordering needs a square matrix, got {A.shape}")
    return np.asarray(reverse_cuthill_mckee(A, symmetric_mode=True), dtype=int)


@dataclass(frozen=True)
class BandStats:
    n_dof: int
    nnz: int
    bandwidth_before: int
    bandwidth_after: int


def band_stats(A, q: np.ndarray) -> BandStats:
    A = sp.csr_matrix(A)
    return BandStats(n_dof=A.shape[0], nnz=A.nnz, bandwidth_before=bandwidth(A),
                     bandwidth_after=bandwidth(A[q][:, q]))


# --- Factorization ---

@dataclass
class Factorization:
    q: np.ndarray
    lu: object
    n_dof: int
    fill_in: int
    factor_seconds: float
    solve_count: int = 0
    solve_total_seconds: float = 0.0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def mean_solve_seconds(self) -> float:
        return self.solve_total_seconds / self.solve_count if self.solve_count else float("nan")


def factorize(A, q: np.ndarray = None) -> Factorization:
    """
    Factorizes A(q, q) without pivoting (SPD systems). Raises FactorizationError
    on a singular or indefinite pivot.
    """
    A = sp.csr_matrix(A, dtype=float)
    n = A.shape[0]
    if q is None:
        q = rcm_permutation(A)
    q = np.asarray(q, dtype=int)
    if A.shape[0] != A.shape[1] or len(q) != n:
        raise ParameterError(f"matrix {A.shape} and permutation of length {len(q)} do not match")

    start = time.perf_counter()
    try:
        lu = splu(sp.csc_matrix(A[q][:, q]), permc_spec="NATURAL", diag_pivot_thresh=0.0,
                  options=dict(SymmetricMode=True))
    except RuntimeError as e:
        raise FactorizationError(f"factorization failed: {e}") from e
    elapsed = time.perf_counter() - start

    pivots = lu.U.diagonal()
    if not np.all(np.isfinite(pivots)) or np.any(pivots <= SINGULAR_PIVOT_RATIO * np.abs(pivots).max()):
        raise FactorizationError(
            f"non-positive pivot {pivots.min():.3e}: system is not symmetric positive definite")
    if not np.array_equal(lu.perm_r, np.arange(n)):
        raise FactorizationError("factorization needed row pivoting: system is not positive definite")

    fill_in = int(lu.L.nnz + lu.U.nnz - n - A.nnz)
    logger.info("Factorized N_dof=%d in %.3f s (bandwidth %d -> %d, fill-in %d)",
                n, elapsed, bandwidth(A), bandwidth(A[q][:, q]), fill_in)
    return Factorization(q=q, lu=lu, n_dof=n, fill_in=fill_in, factor_seconds=elapsed)


def solve(fact: Factorization, b: np.ndarray) -> np.ndarray:
    """Solves with a stored factorization; b may hold several right-hand sides as columns."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != fact.n_dof:
        raise ParameterError(f"right-hand side has {b.shape[0]} rows, system has {fact.n_dof}")
    x = np.empty_like(b)
    with fact._lock:
        start = time.perf_counter()
        x[fact.q] = fact.lu.solve(np.ascontiguousarray(b[fact.q]))
        fact.solve_total_seconds += time.perf_counter() - start
        fact.solve_count += 1
    return x
