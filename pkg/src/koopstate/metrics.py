"""Model-level evaluation: latent-separation curves and readout agreement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .koopman import SpectralBasis, project
from .spectral import EigenSystem, _check_modes, dominant_modes
from .state_io import HiddenStateTensor

EMBED_RAW = "raw-coeffs"
EMBED_PCA = "pca-top-d"
EMBED_KOOPMAN = "koopman-top-d"
EMBEDDINGS = (EMBED_RAW, EMBED_PCA, EMBED_KOOPMAN)

REALIFY_RE_IM = "re-im"
REALIFY_MODULUS = "modulus"


@dataclass
class SilhouetteCurve:
    """Cumulative silhouette averages over time plus the per-state scores."""

    values: np.ndarray  # (n,)
    per_point: np.ndarray  # (s, n)


@dataclass
class AgreementReport:
    """Category agreement between a network readout and its linear surrogate."""

    total: int
    matching: int
    confusion: np.ndarray  # (c, c): [network category, surrogate category]

    @property
    def fraction(self) -> float:
        return self.matching / self.total if self.total else 0.0


def silhouette_points(points, labels) -> np.ndarray:
    """Per-point silhouette scores under Euclidean distance.

    For point i in cluster A: a = mean distance to the other members of A,
    b = smallest mean distance to any other cluster, score = (b - a) /
    max(a, b). Points in singleton clusters score 0, as does the degenerate
    a = b = 0 case (coincident clusters).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError(f"points must be a non-empty 2-D array, got shape {pts.shape}")
    labs = np.asarray(labels)
    if labs.shape != (pts.shape[0],):
        raise ValueError(
            f"need one label per point: {labs.shape} labels for {pts.shape[0]} points"
        )
    unique = np.unique(labs)
    if unique.size < 2:
        raise ValueError("silhouette needs at least 2 distinct clusters")
    dist = cdist(pts, pts)
    members = {c: np.flatnonzero(labs == c) for c in unique}
    scores = np.zeros(pts.shape[0])
    for i in range(pts.shape[0]):
        own = members[labs[i]]
        if own.size <= 1:
            continue
        a = dist[i, own].sum() / (own.size - 1)
        b = min(dist[i, members[c]].mean() for c in unique if c != labs[i])
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return scores


def silhouette_curve(
    tensor: HiddenStateTensor,
    basis: SpectralBasis,
    labels,
    embedding: str = EMBED_RAW,
    dim: int = 5,
    eigsys: EigenSystem | None = None,
    modes=None,
    realify: str = REALIFY_RE_IM,
) -> SilhouetteCurve:
    """Silhouette of per-time-slice embedded coefficients, cumulatively averaged.

    States at equal step index are compared with each other; ``values[t]``
    is the running mean of all per-state scores up to and including step t.
    Embeddings: the raw coefficient vector, its first ``dim`` coordinates,
    or the eigen-coordinates on the ``dim`` dominant modes realified as
    (Re, Im) pairs (or coordinate moduli with ``realify="modulus"``).
    """
    labs = np.asarray(labels)
    if labs.shape != (tensor.samples,):
        raise ValueError(
            f"need one label per sample: {labs.shape} labels for {tensor.samples} samples"
        )
    if embedding not in EMBEDDINGS:
        raise ValueError(f"embedding must be one of {EMBEDDINGS}, got {embedding!r}")
    if realify not in (REALIFY_RE_IM, REALIFY_MODULUS):
        raise ValueError(f"realify must be 're-im' or 'modulus', got {realify!r}")
    if embedding != EMBED_RAW and not 1 <= dim <= basis.rank:
        raise ValueError(f"dim must lie in [1, {basis.rank}], got {dim}")
    if embedding == EMBED_KOOPMAN:
        if eigsys is None:
            raise ValueError("the koopman embedding needs the fitted eigensystem")
        if modes is None:
            modes = dominant_modes(eigsys, dim, tensor, basis)
        else:
            modes = _check_modes(modes, eigsys.rank)
        columns = eigsys.right_vectors[:, list(modes)]

    per_point = np.zeros((tensor.samples, tensor.timesteps))
    valid = (
        tensor.mask
        if tensor.mask is not None
        else np.ones((tensor.samples, tensor.timesteps), dtype=bool)
    )
    for t in range(tensor.timesteps):
        rows = np.flatnonzero(valid[:, t])
        if rows.size == 0:
            continue
        coeffs = project(tensor.data[rows, t, :], basis)
        if embedding == EMBED_RAW:
            embedded = coeffs
        elif embedding == EMBED_PCA:
            embedded = coeffs[:, :dim]
        else:
            coords = coeffs @ columns
            if realify == REALIFY_RE_IM:
                embedded = np.hstack([coords.real, coords.imag])
            else:
                embedded = np.abs(coords)
        per_point[rows, t] = silhouette_points(embedded, labs[rows])

    counts = valid.sum(axis=0)
    sums = np.where(valid, per_point, 0.0).sum(axis=0)
    values = np.cumsum(sums) / np.cumsum(counts)
    return SilhouetteCurve(values=values, per_point=per_point)


def agreement(network_categories, surrogate_categories, num_categories: int) -> AgreementReport:
    """Exact-match counts and the full confusion matrix between two category lists."""
    net = np.asarray(network_categories, dtype=np.int64).ravel()
    sur = np.asarray(surrogate_categories, dtype=np.int64).ravel()
    if net.shape != sur.shape:
        raise ValueError(
            f"category lists differ in length: {net.shape[0]} vs {sur.shape[0]}"
        )
    if num_categories < 1:
        raise ValueError("num_categories must be >= 1")
    for name, arr in (("network", net), ("surrogate", sur)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_categories):
            raise ValueError(
                f"{name} categories must lie in [0, {num_categories}), "
                f"got range [{arr.min()}, {arr.max()}]"
            )
    confusion = np.zeros((num_categories, num_categories), dtype=np.int64)
    np.add.at(confusion, (net, sur), 1)
    return AgreementReport(
        total=int(net.size),
        matching=int(np.trace(confusion)),
        confusion=confusion,
    )
