"""Dense matrix utilities for interval observer design.

Positive/negative splitting, spectral and structural predicates,
a Bartels-Stewart Sylvester solver and an SVD pseudo-inverse.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ._validation import as_matrix, check_square
from .errors import EigenSolverError, NearSingularSylvester, ShapeError, SvdError

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class MatrixSplit:
    """Entrywise split ``M = pos - neg`` with ``pos, neg >= 0``."""

    pos: np.ndarray
    neg: np.ndarray

    def __iter__(self):
        return iter((self.pos, self.neg))

    @property
    def matrix(self):
        return self.pos - self.neg


@dataclass(frozen=True)
class SpectralCertificate:
    max_real_part: float
    spectral_radius: float
    is_metzler: bool
    is_nonnegative: bool
    structural_tolerance: float = 0.0

    def as_dict(self):
        return {
            "max_real_part": float(self.max_real_part),
            "spectral_radius": float(self.spectral_radius),
            "is_metzler": bool(self.is_metzler),
            "is_nonnegative": bool(self.is_nonnegative),
            "structural_tolerance": float(self.structural_tolerance),
        }


def split_pm(M):
    """Split ``M`` into its positive part and the residual.

    ``pos`` has entries ``max(0, m_ij)`` and ``neg = pos - M``. Every entry
    is either copied or zeroed, so ``pos - neg == M`` holds bit-exactly.
    """
    M = np.asarray(M, dtype=float)
    pos = np.maximum(M, 0.0)
    neg = pos - M
    return MatrixSplit(pos, neg)


def eigvals(M):
    M = check_square(M)
    try:
        return np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(f"eigenvalue computation failed: {exc}") from exc


def is_metzler(M, tol=0.0):
    M = check_square(M)
    off = M[~np.eye(M.shape[0], dtype=bool)]
    return bool(np.all(off >= -tol))


def is_nonnegative(M, tol=0.0):
    return bool(np.all(np.asarray(M, dtype=float) >= -tol))


def max_real_part(M):
    return float(np.max(eigvals(M).real))


def spectral_radius(M):
    return float(np.max(np.abs(eigvals(M))))


def is_hurwitz(M):
    return max_real_part(M) < 0.0


def is_schur(M):
    return spectral_radius(M) < 1.0


def spectral_certificate(M, tol=0.0):
    M = check_square(M)
    return SpectralCertificate(
        max_real_part=max_real_part(M),
        spectral_radius=spectral_radius(M),
        is_metzler=is_metzler(M, tol),
        is_nonnegative=is_nonnegative(M, tol),
        structural_tolerance=float(tol),
    )


def numerical_rank(M):
    """Rank with the cut-off ``sigma > max(m, n) * eps * sigma_max``."""
    M = as_matrix(M)
    if M.size == 0:
        return 0
    s = singular_values(M)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > max(M.shape) * _EPS * s[0]))


def controllability_matrix(A, B):
    A = check_square(A, "A")
    B = as_matrix(B, "B")
    if B.shape[0] != A.shape[0]:
        raise ShapeError(f"B must have {A.shape[0]} rows, got shape {B.shape}")
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def is_controllable(A, B):
    A = check_square(A, "A")
    return numerical_rank(controllability_matrix(A, B)) == A.shape[0]


def observability_matrix(F, H):
    F = check_square(F, "F")
    H = np.atleast_2d(np.asarray(H, dtype=float))
    return controllability_matrix(F.T, H.T).T


def is_observable(F, H):
    F = check_square(F, "F")
    return numerical_rank(observability_matrix(F, H)) == F.shape[0]


def default_gap_tol(A, F):
    scale = max(np.max(np.abs(eigvals(A))), np.max(np.abs(eigvals(F))))
    return 1e-8 * (1.0 + scale)


def spectral_gap(A, F):
    """Minimum distance between an eigenvalue of ``A`` and one of ``F``."""
    ea, ef = eigvals(A), eigvals(F)
    return float(np.min(np.abs(ea[:, None] - ef[None, :])))


def spectra_disjoint(A, F, gap_tol=None):
    if gap_tol is None:
        gap_tol = default_gap_tol(A, F)
    return spectral_gap(A, F) > gap_tol


def sylvester_residual(T, A, F, C):
    """Relative residual of ``T F = A T + C``."""
    res = np.linalg.norm(T @ F - A @ T - C)
    scale = (np.linalg.norm(A) + np.linalg.norm(F)) * np.linalg.norm(T) + np.linalg.norm(C)
    return float(res / scale) if scale > 0 else float(res)


def solve_sylvester(A, F, C, gap_tol=None):
    """Solve ``T F = A T + C`` for ``T``.

    Delegates to the Bartels-Stewart solver in :func:`scipy.linalg.solve_sylvester`
    after checking that the spectra are separated.

    Parameters
    ----------
    A : (nz, nz) array_like
    F : (nx, nx) array_like
    C : (nz, nx) array_like
    gap_tol : float, optional
        Minimal admissible distance between the spectra of ``A`` and ``F``.
        Defaults to ``1e-8 * (1 + max |eigenvalue|)``.

    Returns
    -------
    T : (nz, nx) ndarray

    Raises
    ------
    NearSingularSylvester
        If the spectra of ``A`` and ``F`` are closer than ``gap_tol``.
    """
    A = check_square(A, "A")
    F = check_square(F, "F")
    C = as_matrix(C, "C")
    if C.shape != (A.shape[0], F.shape[0]):
        raise ShapeError(f"C must have shape {(A.shape[0], F.shape[0])}, got {C.shape}")
    if gap_tol is None:
        gap_tol = default_gap_tol(A, F)
    gap = spectral_gap(A, F)
    if not gap > gap_tol:
        raise NearSingularSylvester(f"spectral gap {gap:.3e} <= tolerance {gap_tol:.3e}")

    # T F = A T + C  <=>  (-A) T + T F = C
    return linalg.solve_sylvester(-A, F, C)


def singular_values(M):
    M = as_matrix(M)
    if M.size == 0:
        return np.zeros(0)
    try:
        return np.linalg.svd(M, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise SvdError(f"SVD did not converge: {exc}") from exc


def min_singular_value(M):
    """Square root of the smallest eigenvalue of ``M.T @ M``.

    This is the smallest singular value for square and tall matrices and
    zero for wide ones, which can never be left-invertible.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0.0
    s = singular_values(M)
    if M.shape[0] < M.shape[1]:
        return 0.0
    return float(s[-1])


def pinv(M, rcond=None):
    """Moore-Penrose pseudo-inverse via :func:`numpy.linalg.pinv`.

    Singular values below ``rcond * sigma_max`` are treated as zero;
    ``rcond`` defaults to ``max(m, n) * eps``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    m, n = M.shape
    if M.size == 0:
        return np.zeros((n, m))
    if rcond is None:
        rcond = max(m, n) * _EPS
    try:
        return np.linalg.pinv(M, rcond=rcond)
    except np.linalg.LinAlgError as exc:
        raise SvdError(f"SVD did not converge: {exc}") from exc
