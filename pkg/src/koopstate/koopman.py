"""Spectral basis construction, operator fitting, prediction, and error metrics.

The pipeline is: stack the valid hidden states, take the top right-singular
directions as an orthonormal basis B, represent states by their coefficients
``h @ B``, and fit the square matrix C that best maps each coefficient vector
to its successor in the least-squares sense. Prediction is then
``h @ B @ C @ B.T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics
from .state_io import HiddenStateTensor, flatten_valid
from .validation import check_real_matrix

BASIS_SVD = "svd"
BASIS_PCA = "pca-centered"
BASIS_METHODS = (BASIS_SVD, BASIS_PCA)

DEFAULT_ENERGY = 0.999


@dataclass
class SpectralBasis:
    """Orthonormal basis columns for hidden states, from a truncated SVD.

    ``mean`` is present exactly when the basis was fitted on mean-centered
    states (the PCA variant); projection then subtracts it and lifting adds
    it back.
    """

    vectors: np.ndarray  # (k, r), orthonormal columns
    singular_values: np.ndarray  # (r,), descending
    method: str = BASIS_SVD
    mean: np.ndarray | None = None

    def __post_init__(self):
        self.vectors = check_real_matrix(self.vectors, "basis vectors")
        self.singular_values = np.asarray(self.singular_values, dtype=np.float64)
        if self.method not in BASIS_METHODS:
            raise ValueError(f"basis method must be one of {BASIS_METHODS}, got {self.method!r}")
        if self.singular_values.shape != (self.vectors.shape[1],):
            raise ValueError("need one singular value per basis column")
        if (self.mean is not None) != (self.method == BASIS_PCA):
            raise ValueError("mean must be present iff the basis is pca-centered")
        if self.mean is not None:
            self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
            if self.mean.shape[0] != self.vectors.shape[0]:
                raise ValueError("mean length must equal the state dimension")

    @property
    def state_dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def rank(self) -> int:
        return self.vectors.shape[1]


@dataclass
class KoopmanOperator:
    """The fitted transition matrix in basis coordinates, bound to its basis."""

    matrix: np.ndarray  # (r, r)
    basis: SpectralBasis
    fit_residual: float

    def __post_init__(self):
        self.matrix = check_real_matrix(self.matrix, "operator matrix")
        r = self.basis.rank
        if self.matrix.shape != (r, r):
            raise ValueError(
                f"operator shape {self.matrix.shape} does not match basis rank {r}"
            )

    @property
    def rank(self) -> int:
        return self.basis.rank


def choose_rank(singular_values, energy: float = DEFAULT_ENERGY) -> int:
    """Smallest rank capturing ``energy`` of the cumulative squared spectrum."""
    sv = np.asarray(singular_values, dtype=np.float64)
    if sv.size == 0:
        raise ValueError("need at least one singular value")
    if not 0.0 < energy <= 1.0:
        raise ValueError(f"energy must lie in (0, 1], got {energy}")
    total = float(np.sum(sv**2))
    if total == 0.0:
        return 1
    fractions = np.cumsum(sv**2) / total
    return int(np.searchsorted(fractions, energy) + 1)


def compute_basis(
    tensor: HiddenStateTensor, rank: int, method: str = BASIS_SVD
) -> SpectralBasis:
    """Top-``rank`` right singular directions of the stacked valid states.

    With ``method="pca-centered"`` the stack is mean-centered first and the
    mean is stored on the basis. Column signs are fixed by making each
    column's largest-magnitude entry positive, so results are reproducible
    bit-for-bit.
    """
    if method not in BASIS_METHODS:
        raise ValueError(f"basis method must be one of {BASIS_METHODS}, got {method!r}")
    stack = tensor.stacked_valid()
    max_rank = min(tensor.hidden_dim, stack.shape[0])
    if not 1 <= rank <= max_rank:
        raise ValueError(
            f"rank must lie in [1, {max_rank}] "
            f"(min of hidden_dim {tensor.hidden_dim} and {stack.shape[0]} state rows), "
            f"got {rank}"
        )
    mean = None
    if method == BASIS_PCA:
        mean = stack.mean(axis=0)
        stack = stack - mean
    result = numerics.svd(stack)
    vectors = result.right[:, :rank].copy()
    for j in range(rank):
        lead = int(np.argmax(np.abs(vectors[:, j])))
        if vectors[lead, j] < 0:
            vectors[:, j] = -vectors[:, j]
    return SpectralBasis(
        vectors, result.singular_values[:rank].copy(), method=method, mean=mean
    )


def project(states, basis: SpectralBasis) -> np.ndarray:
    """Basis coefficients of each state row: ``(h - mean?) @ B``."""
    rows = check_real_matrix(states, "states")
    if rows.shape[1] != basis.state_dim:
        raise ValueError(
            f"states have {rows.shape[1]} features, basis expects {basis.state_dim}"
        )
    if basis.mean is not None:
        rows = rows - basis.mean
    return rows @ basis.vectors


def lift(coefficients, basis: SpectralBasis) -> np.ndarray:
    """Back from coefficients to state space: ``c @ B.T (+ mean?)``."""
    rows = check_real_matrix(coefficients, "coefficients")
    if rows.shape[1] != basis.rank:
        raise ValueError(
            f"coefficients have {rows.shape[1]} columns, basis rank is {basis.rank}"
        )
    out = rows @ basis.vectors.T
    if basis.mean is not None:
        out = out + basis.mean
    return out


def fit_koopman(
    tensor: HiddenStateTensor, basis: SpectralBasis, include_padded: bool = False
) -> KoopmanOperator:
    """Least-squares fit of the coefficient-space transition matrix.

    All (sample, consecutive-step) pairs are row-stacked into one system,
    so the minimizer is the one for the summed squared Frobenius error.
    Rank-deficient stacks get the minimum-norm solution.
    """
    x, y = flatten_valid(tensor, include_padded=include_padded)
    x_proj = project(x, basis)
    y_proj = project(y, basis)
    matrix = numerics.lstsq(x_proj, y_proj)
    target_norm = float(np.linalg.norm(y_proj))
    residual = float(np.linalg.norm(x_proj @ matrix - y_proj))
    fit_residual = residual / max(target_norm, 1e-300)
    return KoopmanOperator(matrix, basis, fit_residual)


def predict_next(states, operator: KoopmanOperator) -> np.ndarray:
    """One-step prediction ``h @ B @ C @ B.T`` for each state row."""
    coeffs = project(states, operator.basis)
    return lift(coeffs @ operator.matrix, operator.basis)


def rollout(states, operator: KoopmanOperator, steps: int) -> list[np.ndarray]:
    """Iterated predictions; entry i is the (i+1)-step prediction.

    Projection happens once and the operator is applied in coefficient
    space, which matches repeated ``predict_next`` exactly because the basis
    columns are orthonormal.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    coeffs = project(states, operator.basis)
    out = []
    for _ in range(steps):
        coeffs = coeffs @ operator.matrix
        out.append(lift(coeffs, operator.basis))
    return out


def relative_error(predicted: HiddenStateTensor, actual: HiddenStateTensor) -> float:
    """Mean over valid states of the squared relative prediction error.

    For each valid (sample, step): ``|h_pred - h|^2 / |h|^2``, averaged.
    """
    if predicted.data.shape != actual.data.shape:
        raise ValueError(
            f"shape mismatch: predicted {predicted.data.shape}, actual {actual.data.shape}"
        )
    if (predicted.mask is None) != (actual.mask is None) or (
        predicted.mask is not None and not np.array_equal(predicted.mask, actual.mask)
    ):
        raise ValueError("predicted and actual tensors must carry identical masks")
    sq_err = np.sum((predicted.data - actual.data) ** 2, axis=2)
    sq_norm = np.sum(actual.data**2, axis=2)
    valid = actual.mask if actual.mask is not None else np.ones(sq_norm.shape, dtype=bool)
    zero = valid & (sq_norm == 0.0)
    if np.any(zero):
        s, t = (int(v) for v in np.argwhere(zero)[0])
        raise ValueError(f"actual state at (sample {s}, step {t}) is the zero vector")
    return float(np.mean(sq_err[valid] / sq_norm[valid]))


def one_step_error(
    tensor: HiddenStateTensor, operator: KoopmanOperator, include_padded: bool = False
) -> float:
    """Relative error of one-step predictions over all consecutive valid pairs."""
    x, y = flatten_valid(tensor, include_padded=include_padded)
    predicted = predict_next(x, operator)
    sq_norm = np.sum(y**2, axis=1)
    if np.any(sq_norm == 0.0):
        row = int(np.flatnonzero(sq_norm == 0.0)[0])
        raise ValueError(f"actual successor state in stacked row {row} is the zero vector")
    return float(np.mean(np.sum((predicted - y) ** 2, axis=1) / sq_norm))


def multi_step_errors(
    tensor: HiddenStateTensor,
    operator: KoopmanOperator,
    steps: int,
    include_padded: bool = False,
) -> list[float]:
    """Relative error of l-step predictions for l = 1..steps.

    Each l compares the rollout from step t against the recorded state at
    t + l, over every valid pair that far apart.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    lengths = (
        np.full(tensor.samples, tensor.timesteps, dtype=np.int64)
        if include_padded
        else tensor.valid_lengths()
    )
    errors = []
    for step in range(1, steps + 1):
        if np.any(lengths <= step):
            bad = int(np.flatnonzero(lengths <= step)[0])
            raise ValueError(
                f"sample {bad} has {int(lengths[bad])} valid steps; cannot measure "
                f"{step}-step error"
            )
        starts = np.concatenate([tensor.data[s, : lengths[s] - step] for s in range(tensor.samples)])
        targets = np.concatenate([tensor.data[s, step : lengths[s]] for s in range(tensor.samples)])
        predicted = rollout(starts, operator, step)[-1]
        sq_norm = np.sum(targets**2, axis=1)
        if np.any(sq_norm == 0.0):
            row = int(np.flatnonzero(sq_norm == 0.0)[0])
            raise ValueError(f"target state in stacked row {row} is the zero vector")
        errors.append(float(np.mean(np.sum((predicted - targets) ** 2, axis=1) / sq_norm)))
    return errors
