"""Input validation helpers used by the estimators and the functional core."""

from __future__ import annotations

import numpy as np


def check_real_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array or raise ValueError."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size and not np.isfinite(arr).all():
        idx = first_nonfinite(arr)
        raise ValueError(f"{name} contains a non-finite entry at index {idx}")
    return arr


def check_complex_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D complex128 array or raise ValueError."""
    arr = np.asarray(a, dtype=np.complex128)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size and not (np.isfinite(arr.real).all() and np.isfinite(arr.imag).all()):
        idx = first_nonfinite(arr.real + arr.imag)
        raise ValueError(f"{name} contains a non-finite entry at index {idx}")
    return arr


def check_square(arr: np.ndarray, name: str = "matrix") -> np.ndarray:
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be square, got shape {arr.shape}")
    return arr


def check_real_vector(a, name: str = "vector") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size and not np.isfinite(arr).all():
        idx = first_nonfinite(arr)
        raise ValueError(f"{name} contains a non-finite entry at index {idx}")
    return arr


def first_nonfinite(arr: np.ndarray) -> tuple[int, ...]:
    """Index of the first non-finite entry, in C order."""
    flat = np.flatnonzero(~np.isfinite(arr))
    return tuple(int(i) for i in np.unravel_index(flat[0], arr.shape))
