"""Dense linear-algebra kernels for desk-scale matrices.

Thin contracts over LAPACK (via numpy): spectral radius with the full
eigenvalue list, spectral norm with a deterministic top singular pair, and a
conditioning-checked linear solve.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConvergenceError, SingularMatrixError
from .validation import check_matrix

# LAPACK drivers iterate internally; this is the cap reported to callers.
MAX_EIG_ITER = 10_000
COND_LIMIT = 1e12


@dataclass(frozen=True)
class SpectralResult:
    value: float
    eigenvalues: np.ndarray | None = None
    left_vector: np.ndarray | None = None
    right_vector: np.ndarray | None = None
    singular_values: np.ndarray | None = field(default=None, repr=False)


def agreement_matrix(q):
    """The averaging projector ``(1/q) 1 1^T``."""
    return np.full((q, q), 1.0 / q)


def spectral_radius(M) -> SpectralResult:
    M = check_matrix(M, name="M", square=True)
    try:
        eig = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"eigenvalue iteration failed within {MAX_EIG_ITER} steps") from exc
    return SpectralResult(value=float(np.max(np.abs(eig))), eigenvalues=eig)


def _orient(u, v):
    # first nonzero entry of the right vector is positive
    nz = np.flatnonzero(np.abs(v) > 1e-14)
    if nz.size and v[nz[0]] < 0:
        return -u, -v
    return u, v


def spectral_norm(M) -> SpectralResult:
    """Largest singular value with unit left/right singular vectors."""
    M = check_matrix(M, name="M")
    try:
        U, s, Vt = np.linalg.svd(M)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"SVD failed within {MAX_EIG_ITER} steps") from exc
    u, v = _orient(U[:, 0].copy(), Vt[0].copy())
    return SpectralResult(value=float(s[0]), left_vector=u, right_vector=v, singular_values=s)


def solve_linear(A, B):
    """Solve ``A X = B``; raise :class:`SingularMatrixError` when ``A`` is singular
    or its condition number exceeds ``COND_LIMIT``."""
    A = check_matrix(A, name="A", square=True)
    B = np.asarray(B, dtype=float)
    if B.shape[0] != A.shape[0]:
        raise ValueError(f"B has {B.shape[0]} rows, A is {A.shape[0]}x{A.shape[0]}")
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMatrixError(f"matrix is singular or ill-conditioned (cond={cond:.3g})")
    return np.linalg.solve(A, B)
