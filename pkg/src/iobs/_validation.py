"""Input validation helpers used at the public boundaries of the package."""

import numpy as np

from .errors import ShapeError


def as_matrix(M, name="M"):
    """Return ``M`` as a finite 2-D float array.

    Scalars become 1x1 and 1-D inputs become a single column, which is
    the convention used for input matrices such as ``B = (1, 1)``.
    """
    arr = np.asarray(M, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_row_matrix(M, name="M"):
    """Like :func:`as_matrix` but 1-D inputs become a single row (output maps)."""
    arr = np.asarray(M, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    return as_matrix(arr, name)


def as_vector(v, n=None, name="v"):
    arr = np.asarray(v, dtype=float).reshape(-1)
    if n is not None and arr.shape[0] != n:
        raise ShapeError(f"{name} must have length {n}, got {arr.shape[0]}")
    return arr


def check_square(M, name="M"):
    M = as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {M.shape}")
    return M


def check_rows(M, n, name="M"):
    if M.shape[0] != n:
        raise ShapeError(f"{name} must have {n} rows, got shape {M.shape}")
    return M


def check_cols(M, n, name="M"):
    if M.shape[1] != n:
        raise ShapeError(f"{name} must have {n} columns, got shape {M.shape}")
    return M
