"""Linear-operator analysis of sequence-model hidden-state dynamics.

Fit an orthonormal spectral basis to a batch of hidden-state trajectories,
estimate the linear map that pushes basis coefficients one step forward,
and use its eigenvalues and eigenvectors to predict, decompose, and
interpret the dynamics.
"""

__version__ = "0.1.0"

from .estimators import KoopmanSurrogate, SpectralProjection
from .harness import (
    CounterRnn,
    LinearDynamics,
    RecurrentCell,
    TokenVocabulary,
    build_counter_rnn,
    gen_labeled_clusters,
    gen_linear,
    linear_decoder,
    run_cell,
    sample_token_streams,
)
from .koopman import (
    KoopmanOperator,
    SpectralBasis,
    choose_rank,
    compute_basis,
    fit_koopman,
    lift,
    multi_step_errors,
    one_step_error,
    predict_next,
    project,
    relative_error,
    rollout,
)
from .metrics import AgreementReport, SilhouetteCurve, agreement, silhouette_curve, silhouette_points
from .spectral import (
    UNSTABLE,
    EigenSystem,
    close_conjugates,
    decompose,
    dominant_modes,
    eigen_coords,
    magnitude_series,
    memory_horizon,
    projection_magnitude,
    separability_residual,
    subspace_projector,
)
from .state_io import (
    DatasetManifest,
    HiddenStateTensor,
    ReadoutHead,
    apply_readout,
    flatten_valid,
    load_dataset,
    load_manifest,
    load_matrix,
    load_tensor,
    save_manifest,
    save_matrix,
    save_tensor,
)

__all__ = [
    "__version__",
    "AgreementReport",
    "CounterRnn",
    "DatasetManifest",
    "EigenSystem",
    "HiddenStateTensor",
    "KoopmanOperator",
    "KoopmanSurrogate",
    "LinearDynamics",
    "ReadoutHead",
    "RecurrentCell",
    "SilhouetteCurve",
    "SpectralBasis",
    "SpectralProjection",
    "TokenVocabulary",
    "UNSTABLE",
    "agreement",
    "apply_readout",
    "build_counter_rnn",
    "choose_rank",
    "close_conjugates",
    "compute_basis",
    "decompose",
    "dominant_modes",
    "eigen_coords",
    "fit_koopman",
    "flatten_valid",
    "gen_labeled_clusters",
    "gen_linear",
    "lift",
    "linear_decoder",
    "load_dataset",
    "load_manifest",
    "load_matrix",
    "load_tensor",
    "magnitude_series",
    "memory_horizon",
    "multi_step_errors",
    "one_step_error",
    "predict_next",
    "project",
    "projection_magnitude",
    "relative_error",
    "rollout",
    "run_cell",
    "sample_token_streams",
    "save_manifest",
    "save_matrix",
    "save_tensor",
    "separability_residual",
    "silhouette_curve",
    "silhouette_points",
    "subspace_projector",
]
