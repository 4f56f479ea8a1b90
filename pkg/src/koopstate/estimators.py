"""Scikit-learn style front end over the functional core.

Both estimators accept hidden-state input as an (s, n, k) array or a
HiddenStateTensor in ``fit``; per-state methods (transform, predict)
operate on 2-D (rows, k) matrices so they compose with the wider sklearn
ecosystem.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import koopman, spectral
from .state_io import HiddenStateTensor


def as_state_tensor(X, mask=None) -> HiddenStateTensor:
    """Coerce estimator input into a validated HiddenStateTensor."""
    if isinstance(X, HiddenStateTensor):
        if mask is not None:
            raise ValueError("pass the mask inside the HiddenStateTensor, not separately")
        return X
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 2:
        # a single trajectory: interpret rows as time steps
        arr = arr[None, :, :]
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)[None, :]
    return HiddenStateTensor(arr, mask)


class SpectralProjection(BaseEstimator, TransformerMixin):
    """Orthonormal truncated-SVD (or centered PCA) basis over hidden states.

    Parameters
    ----------
    rank : int or None
        Basis size. None selects the smallest rank capturing ``energy`` of
        the squared singular-value mass.
    energy : float
        Cumulative energy threshold used when ``rank`` is None.
    method : str
        "svd" (plain, the default) or "pca-centered" (subtract the state
        mean before the decomposition).
    """

    def __init__(self, rank=None, energy=koopman.DEFAULT_ENERGY, method=koopman.BASIS_SVD):
        self.rank = rank
        self.energy = energy
        self.method = method

    def fit(self, X, y=None, mask=None):
        tensor = as_state_tensor(X, mask)
        rank = self.rank
        if rank is None:
            full = min(tensor.hidden_dim, tensor.stacked_valid().shape[0])
            probe = koopman.compute_basis(tensor, full, method=self.method)
            rank = koopman.choose_rank(probe.singular_values, self.energy)
        self.basis_ = koopman.compute_basis(tensor, rank, method=self.method)
        self.rank_ = self.basis_.rank
        self.singular_values_ = self.basis_.singular_values
        return self

    def transform(self, X):
        check_is_fitted(self, "basis_")
        return koopman.project(X, self.basis_)

    def inverse_transform(self, X):
        check_is_fitted(self, "basis_")
        return koopman.lift(X, self.basis_)


class KoopmanSurrogate(BaseEstimator):
    """Linear one-step surrogate of a sequence model's hidden-state dynamics.

    ``fit`` builds the spectral basis from the stacked states, solves the
    least-squares transition matrix over all consecutive valid state pairs,
    and eigendecomposes it. ``predict`` maps state rows to their predicted
    successors; ``transform`` returns basis coefficients.

    Parameters
    ----------
    rank : int or None
        Basis size; None selects by cumulative spectral energy.
    energy : float
        Energy threshold for automatic rank selection.
    method : str
        Basis construction, "svd" or "pca-centered".
    include_padded : bool
        Fit over padded steps too (zero-padding convention) instead of
        excluding pairs that straddle the valid/padded boundary.
    """

    def __init__(
        self,
        rank=None,
        energy=koopman.DEFAULT_ENERGY,
        method=koopman.BASIS_SVD,
        include_padded=False,
    ):
        self.rank = rank
        self.energy = energy
        self.method = method
        self.include_padded = include_padded

    def fit(self, X, y=None, mask=None):
        tensor = as_state_tensor(X, mask)
        projection = SpectralProjection(rank=self.rank, energy=self.energy, method=self.method)
        projection.fit(tensor)
        self.basis_ = projection.basis_
        self.rank_ = projection.rank_
        self.singular_values_ = projection.singular_values_
        self.operator_ = koopman.fit_koopman(
            tensor, self.basis_, include_padded=self.include_padded
        )
        self.fit_residual_ = self.operator_.fit_residual
        self.eigensystem_ = spectral.decompose(self.operator_)
        self.eigenvalues_ = self.eigensystem_.values
        return self

    def transform(self, X):
        check_is_fitted(self, "operator_")
        return koopman.project(X, self.basis_)

    def predict(self, X):
        check_is_fitted(self, "operator_")
        return koopman.predict_next(X, self.operator_)

    def rollout(self, X, steps: int):
        check_is_fitted(self, "operator_")
        return koopman.rollout(X, self.operator_, steps)

    def score(self, X, y=None, mask=None):
        """Negative mean squared relative one-step error (higher is better)."""
        check_is_fitted(self, "operator_")
        tensor = as_state_tensor(X, mask)
        return -koopman.one_step_error(tensor, self.operator_, include_padded=self.include_padded)

    def memory_horizons(self, epsilon: float = spectral.DEFAULT_EPSILON):
        check_is_fitted(self, "eigensystem_")
        return [spectral.memory_horizon(v, epsilon) for v in self.eigensystem_.values]

    def dominant_modes(self, count: int, X=None, mask=None):
        check_is_fitted(self, "eigensystem_")
        tensor = None if X is None else as_state_tensor(X, mask)
        return spectral.dominant_modes(
            self.eigensystem_, count, tensor, self.basis_ if tensor is not None else None
        )
