"""Dense linear algebra helpers for small symmetric matrices.

All routines operate on plain ``numpy`` arrays. A "symmetric matrix" here is
a square float array whose asymmetry is at most ``SYM_TOL`` elementwise; every
entry point validates this before doing any work.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError, NotPsdError, SingularMatrixError

SYM_TOL = 1e-12
PSD_CLAMP = 1e-10
SPD_MIN_EIG = 1e-12


def check_symmetric(m: np.ndarray, tol: float = SYM_TOL) -> np.ndarray:
    """Validate that ``m`` is a square symmetric float matrix and return it.

    Raises :class:`InvalidInputError` if the shape is wrong or
    ``|m - m.T|`` exceeds ``tol`` anywhere.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {m.shape}")
    asym = np.abs(m - m.T).max() if m.size else 0.0
    if asym > tol:
        raise InvalidInputError(f"matrix is not symmetric: max |m - m.T| = {asym:.3e}")
    return m


def sym_eig(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues sorted in
    descending order and eigenvectors as the matching orthonormal columns,
    so that ``eigenvectors @ diag(eigenvalues) @ eigenvectors.T == m``.
    """
    m = check_symmetric(m)
    vals, vecs = np.linalg.eigh(m)
    return vals[::-1].copy(), vecs[:, ::-1].copy()


def sym_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root of a symmetric PSD matrix.

    Eigenvalues within ``PSD_CLAMP`` of zero are treated as rounding noise
    and clamped to zero before the square root (which would otherwise blow
    the noise up to its square root); anything below ``-PSD_CLAMP`` raises
    :class:`NotPsdError`.
    """
    vals, vecs = sym_eig(m)
    if vals.size and vals[-1] < -PSD_CLAMP:
        raise NotPsdError(f"matrix is not PSD: min eigenvalue {vals[-1]:.3e}")
    vals = np.where(np.abs(vals) <= PSD_CLAMP, 0.0, vals)
    root = (vecs * np.sqrt(vals)) @ vecs.T
    return 0.5 * (root + root.T)


def solve_spd(m: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``m @ x = b`` for symmetric positive-definite ``m``.

    Raises :class:`SingularMatrixError` when the smallest eigenvalue falls
    below ``SPD_MIN_EIG``.
    """
    vals, vecs = sym_eig(m)
    b = np.asarray(b, dtype=float)
    if vals.size == 0 or vals[-1] < SPD_MIN_EIG:
        low = vals[-1] if vals.size else float("nan")
        raise SingularMatrixError(f"matrix is singular or indefinite: min eigenvalue {low:.3e}")
    return vecs @ ((vecs.T @ b) / (vals if b.ndim == 1 else vals[:, None]))


def trace(m: np.ndarray) -> float:
    """Trace of a symmetric matrix."""
    return float(np.trace(check_symmetric(m)))


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Product ``m @ v`` with shape validation."""
    m = check_symmetric(m)
    v = np.asarray(v, dtype=float)
    if v.shape[0] != m.shape[0]:
        raise InvalidInputError(f"dimension mismatch: matrix {m.shape} vs vector {v.shape}")
    return m @ v
