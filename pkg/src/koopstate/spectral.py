"""Everything derived from the eigendecomposition of the fitted operator.

Eigenbasis coordinates evolve independently of each other (each scaled by
its eigenvalue per step), which turns the operator into a set of separable
modes. Eigenvalue moduli give each mode a memory horizon; eigenvector
coefficients give per-state projection magnitudes; selected conjugate-pair
subspaces give interpretable reconstructions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import ModeClosureError, NumericsError
from .koopman import KoopmanOperator, SpectralBasis, project
from .state_io import HiddenStateTensor, flatten_valid
from .validation import check_real_vector

#: Marker returned for modes whose eigenvalue modulus exceeds the unit band.
UNSTABLE = "unstable"

DEFAULT_EPSILON = 1e-2
UNIT_BAND = 1e-12
_PHASE_TOL = 1e-12
_CONJUGATE_TOL = 1e-10


@dataclass
class EigenSystem:
    """Eigendecomposition of a fitted operator.

    ``right_vectors`` holds unit-norm right eigenvectors in columns (first
    significant component rotated real-positive); the rows of
    ``koopman_vectors`` (the inverse of the eigenvector matrix) are the
    coordinates in which the dynamics act diagonally.
    """

    values: np.ndarray  # (r,) complex, modulus-descending
    right_vectors: np.ndarray  # V, (r, r) complex
    koopman_vectors: np.ndarray  # U = V^{-1}, (r, r) complex
    condition: float
    defective: bool

    @property
    def rank(self) -> int:
        return self.values.shape[0]


def decompose(
    operator: KoopmanOperator,
    *,
    defective_condition: float = numerics.DEFAULT_DEFECTIVE_CONDITION,
    max_condition: float = numerics.DEFAULT_MAX_CONDITION,
) -> EigenSystem:
    """Eigensystem of the operator with pinned ordering and phase convention.

    Nearly defective eigenvector matrices are flagged rather than rejected;
    a singular one (condition above ``max_condition``) raises, since the
    inverse-eigenvector coordinates no longer exist.
    """
    result = numerics.eig(operator.matrix, defective_condition=defective_condition)
    vectors = result.vectors.copy()
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        norm = np.linalg.norm(col)
        if norm > 0:
            col = col / norm
        significant = np.flatnonzero(np.abs(col) > _PHASE_TOL)
        if significant.size:
            lead = col[significant[0]]
            col = col * (lead.conjugate() / abs(lead))
        vectors[:, j] = col
    koopman_vectors = numerics.inverse(vectors, max_condition=max_condition)
    return EigenSystem(
        values=result.values,
        right_vectors=vectors,
        koopman_vectors=koopman_vectors,
        condition=result.condition,
        defective=result.defective,
    )


def eigen_coords(states, basis: SpectralBasis, eigsys: EigenSystem) -> np.ndarray:
    """Eigenbasis coordinates of each state row: ``h @ B @ V``."""
    coeffs = project(states, basis)
    if coeffs.shape[1] != eigsys.rank:
        raise ValueError(
            f"basis rank {coeffs.shape[1]} does not match eigensystem rank {eigsys.rank}"
        )
    return coeffs @ eigsys.right_vectors


def separability_residual(
    tensor: HiddenStateTensor,
    basis: SpectralBasis,
    eigsys: EigenSystem,
    include_padded: bool = False,
) -> float:
    """How far consecutive eigen-coordinates are from diagonal evolution.

    Mean over valid consecutive pairs of
    ``|coords(t+1) - coords(t) * lambda| / max(|coords(t+1)|, tiny)``.
    """
    x, y = flatten_valid(tensor, include_padded=include_padded)
    x_hat = eigen_coords(x, basis, eigsys)
    y_hat = eigen_coords(y, basis, eigsys)
    residual = np.linalg.norm(y_hat - x_hat * eigsys.values, axis=1)
    scale = np.maximum(np.linalg.norm(y_hat, axis=1), 1e-30)
    return float(np.mean(residual / scale))


def memory_horizon(value, epsilon: float = DEFAULT_EPSILON) -> float | str:
    """Steps until a mode's influence decays below ``epsilon``.

    ``log(epsilon) / log(|value|)`` for decaying modes; ``math.inf`` when the
    modulus sits on the unit circle (within 1e-12: powers only rotate, the
    mode never decays); the ``UNSTABLE`` marker above the unit band, where
    powers diverge. A modulus at or below 1e-300 decays immediately (0).
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    modulus = abs(value)
    if modulus <= 1e-300:
        return 0.0
    if modulus > 1.0 + UNIT_BAND:
        return UNSTABLE
    if modulus >= 1.0 - UNIT_BAND:
        return math.inf
    return math.log(epsilon) / math.log(modulus)


def projection_magnitude(coefficients, eigsys: EigenSystem, mode: int) -> float:
    """Modulus of a coefficient vector's component on eigenvector ``mode``."""
    vec = check_real_vector(coefficients, "coefficients")
    if vec.shape[0] != eigsys.rank:
        raise ValueError(
            f"coefficient vector has length {vec.shape[0]}, eigensystem rank is "
            f"{eigsys.rank}"
        )
    if not 0 <= mode < eigsys.rank:
        raise ValueError(f"mode index {mode} out of range [0, {eigsys.rank})")
    return float(abs(vec @ eigsys.right_vectors[:, mode]))


def magnitude_series(
    tensor: HiddenStateTensor,
    basis: SpectralBasis,
    eigsys: EigenSystem,
    modes,
) -> np.ndarray:
    """Per-(sample, step) sum of projection magnitudes over ``modes``.

    Padded steps emit 0. An empty mode set gives an all-zero array.
    """
    modes = _check_modes(modes, eigsys.rank)
    out = np.zeros((tensor.samples, tensor.timesteps))
    if not modes:
        return out
    flat = tensor.data.reshape(-1, tensor.hidden_dim)
    coords = project(flat, basis) @ eigsys.right_vectors[:, list(modes)]
    series = np.abs(coords).sum(axis=1).reshape(tensor.samples, tensor.timesteps)
    if tensor.mask is not None:
        series = np.where(tensor.mask, series, 0.0)
    return series


def conjugate_partner(values, index: int, tol: float = _CONJUGATE_TOL) -> int | None:
    """Index of the conjugate-paired eigenvalue, or None for (near-)real ones."""
    values = np.asarray(values)
    lam = values[index]
    if abs(lam.imag) <= tol:
        return None
    target = lam.conjugate()
    candidates = [j for j in range(len(values)) if j != index]
    best = min(candidates, key=lambda j: abs(values[j] - target), default=None)
    if best is None or abs(values[best] - target) > max(tol, tol * abs(lam)):
        raise NumericsError(
            f"eigenvalue {lam} at index {index} has no conjugate partner within {tol}"
        )
    return best


def close_conjugates(values, modes, tol: float = _CONJUGATE_TOL) -> tuple[int, ...]:
    """Smallest conjugate-closed superset of ``modes``, ascending."""
    selected = set()
    for j in modes:
        selected.add(int(j))
        partner = conjugate_partner(values, int(j), tol)
        if partner is not None:
            selected.add(partner)
    return tuple(sorted(selected))


def _check_modes(modes, rank: int) -> tuple[int, ...]:
    out = tuple(int(j) for j in modes)
    for j in out:
        if not 0 <= j < rank:
            raise ValueError(f"mode index {j} out of range [0, {rank})")
    if len(set(out)) != len(out):
        raise ValueError(f"duplicate mode indices in {out}")
    return out


def require_conjugate_closed(values, modes) -> tuple[int, ...]:
    """Validate closure under conjugate pairing; raises with the completion."""
    modes = _check_modes(modes, len(np.asarray(values)))
    completed = close_conjugates(values, modes)
    if set(completed) != set(modes):
        raise ModeClosureError(
            f"mode set {tuple(sorted(modes))} is not closed under conjugate pairing; "
            f"smallest closed superset is {completed}",
            completed,
        )
    return tuple(sorted(modes))


def subspace_projector(
    basis: SpectralBasis,
    eigsys: EigenSystem,
    modes,
    combine: str = "modulus",
) -> np.ndarray:
    """State-space map keeping only the selected eigen-modes.

    Computes ``B @ |V_I @ U_I| @ B.T`` with the elementwise complex modulus,
    over a conjugate-closed mode set (closure makes ``V_I @ U_I`` real up to
    roundoff, which is asserted). ``combine="real"`` uses the real part
    instead of the modulus; that variant is an exact idempotent projector
    but is offered as an alternative convention, not the default pipeline.
    """
    if combine not in ("modulus", "real"):
        raise ValueError(f"combine must be 'modulus' or 'real', got {combine!r}")
    modes = require_conjugate_closed(eigsys.values, modes)
    idx = list(modes)
    mixed = eigsys.right_vectors[:, idx] @ eigsys.koopman_vectors[idx, :]
    max_imag = float(np.max(np.abs(mixed.imag))) if mixed.size else 0.0
    if max_imag >= 1e-10:
        raise NumericsError(
            f"conjugate-closed mode product has imaginary part {max_imag:.3e} >= 1e-10"
        )
    core = np.abs(mixed) if combine == "modulus" else mixed.real
    return basis.vectors @ core @ basis.vectors.T


def dominant_modes(
    eigsys: EigenSystem,
    count: int,
    tensor: HiddenStateTensor | None = None,
    basis: SpectralBasis | None = None,
) -> tuple[int, ...]:
    """Top modes, conjugate-closed (so the result may exceed ``count`` by one).

    With an analysis tensor the ranking is the mean projection magnitude of
    its valid states per mode; without one it falls back to eigenvalue
    modulus. Ties break toward the lower index.
    """
    if not 1 <= count <= eigsys.rank:
        raise ValueError(f"count must lie in [1, {eigsys.rank}], got {count}")
    if tensor is not None:
        if basis is None:
            raise ValueError("state-based ranking needs the basis the operator was fitted in")
        coords = project(tensor.stacked_valid(), basis) @ eigsys.right_vectors
        scores = np.abs(coords).mean(axis=0)
    else:
        scores = np.abs(eigsys.values)
    order = np.lexsort((np.arange(eigsys.rank), -scores))
    selected: list[int] = []
    for j in order:
        if j in selected:
            continue
        selected.append(int(j))
        partner = conjugate_partner(eigsys.values, int(j))
        if partner is not None and partner not in selected:
            selected.append(partner)
        if len(selected) >= count:
            break
    return tuple(sorted(selected))
