"""Dense linear-algebra kernels with pinned conventions.

Thin wrappers over LAPACK (through numpy) that fix the conventions the
rest of the toolkit relies on: eigenvalue ordering, minimum-norm least
squares with a relative singular-value cutoff, and explicit conditioning
guards. All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

import warnings
from typing import NamedTuple

import numpy as np

from .errors import NumericsError
from .validation import check_complex_matrix, check_real_matrix, check_square

# Compile-time defaults; every routine takes the matching keyword override.
DEFAULT_LSTSQ_RCOND = 1e-12
DEFAULT_MAX_CONDITION = 1e12
DEFAULT_DEFECTIVE_CONDITION = 1e10

# LAPACK's internal QR-iteration budget, surfaced in convergence errors.
_LAPACK_QR_SWEEP_CAP = 30


class SvdResult(NamedTuple):
    """Economy SVD: ``left @ diag(singular_values) @ right.T`` rebuilds the input."""

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray


class EigResult(NamedTuple):
    """Eigendecomposition of a real square matrix.

    ``values`` are sorted by modulus descending (ties: imaginary part
    descending, then real part descending); ``vectors`` holds the matching
    right eigenvectors in columns. ``condition`` estimates the conditioning
    of the eigenvector matrix; ``defective`` flags estimates above the
    defectiveness threshold.
    """

    values: np.ndarray
    vectors: np.ndarray
    condition: float
    defective: bool


def svd(m) -> SvdResult:
    """Economy singular value decomposition of a real matrix.

    Singular values come back sorted descending and non-negative; both
    factor blocks are orthonormal.
    """
    arr = check_real_matrix(m, "svd input")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"svd input must be non-empty, got shape {arr.shape}")
    try:
        left, values, right_t = np.linalg.svd(arr, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(
            "SVD did not converge within the LAPACK cap of "
            f"{_LAPACK_QR_SWEEP_CAP} QR sweeps per value: {exc}"
        ) from exc
    return SvdResult(left, values, right_t.T.copy())


def eig(a, *, defective_condition: float = DEFAULT_DEFECTIVE_CONDITION) -> EigResult:
    """Eigendecomposition of a real square matrix, deterministically ordered.

    Complex eigenvalues appear in conjugate pairs. A defective (or nearly
    defective) eigenvector matrix is flagged, not rejected; callers decide
    whether diagonalization-based analysis still makes sense.
    """
    arr = check_square(check_real_matrix(a, "eig input"), "eig input")
    if arr.shape[0] < 1:
        raise ValueError("eig input must be non-empty")
    try:
        values, vectors = np.linalg.eig(arr)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(
            "eigendecomposition did not converge within the LAPACK cap of "
            f"{_LAPACK_QR_SWEEP_CAP}*n QR iterations: {exc}"
        ) from exc
    values = values.astype(np.complex128, copy=False)
    vectors = vectors.astype(np.complex128, copy=False)
    order = np.lexsort((-values.real, -values.imag, -np.abs(values)))
    values = values[order]
    vectors = vectors[:, order]
    condition = float(np.linalg.cond(vectors))
    defective = not np.isfinite(condition) or condition > defective_condition
    if defective:
        warnings.warn(
            f"eigenvector matrix condition {condition:.3e} exceeds "
            f"{defective_condition:.1e}; matrix is (close to) defective",
            RuntimeWarning,
            stacklevel=2,
        )
    return EigResult(values, vectors, condition, defective)


def lstsq(x, y, *, rcond: float = DEFAULT_LSTSQ_RCOND) -> np.ndarray:
    """Minimum-norm least-squares solution C of ``x @ C ~= y``.

    Solved through the SVD pseudoinverse; singular values below
    ``rcond * largest`` are treated as zero, so rank-deficient systems get
    the minimum-Frobenius-norm minimizer.
    """
    xa = check_real_matrix(x, "lstsq design matrix")
    ya = check_real_matrix(y, "lstsq target matrix")
    if xa.size == 0 or ya.size == 0:
        raise ValueError("lstsq inputs must be non-empty")
    if xa.shape[0] != ya.shape[0]:
        raise ValueError(
            f"lstsq row mismatch: design has {xa.shape[0]} rows, target {ya.shape[0]}"
        )
    try:
        solution, _, _, _ = np.linalg.lstsq(xa, ya, rcond=rcond)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(
            "least-squares SVD did not converge within the LAPACK cap of "
            f"{_LAPACK_QR_SWEEP_CAP} QR sweeps per value: {exc}"
        ) from exc
    return solution


def inverse(m, *, max_condition: float = DEFAULT_MAX_CONDITION) -> np.ndarray:
    """Inverse of a square complex matrix, guarded by a condition estimate.

    Raises NumericsError carrying the estimate when the 2-norm condition
    number is at or above ``max_condition``.
    """
    arr = check_square(check_complex_matrix(m, "inverse input"), "inverse input")
    if arr.shape[0] < 1:
        raise ValueError("inverse input must be non-empty")
    condition = float(np.linalg.cond(arr))
    if not np.isfinite(condition) or condition >= max_condition:
        raise NumericsError(
            f"matrix is singular or ill-conditioned (condition estimate "
            f"{condition:.3e} >= {max_condition:.1e})",
            condition=condition,
        )
    return np.linalg.inv(arr)
