"""Streaming k-PCA: residual-weighted stochastic subspace tracking.

Estimates the top-k principal subspace of a data stream with O(k'd) work
per sample, alongside Oja, variance-reduced, and batch power baselines,
exact subspace metrics, synthetic effectively-low-rank data, and numerical
validators for the update's identities and convergence envelope.
"""

from .checks import (
    CheckReport,
    basis_with_distance,
    check_convergence_envelope,
    check_expected_gain,
    check_gain_lower_bound,
    check_gram_identity,
    check_inverse_gram_bound,
    check_loss_sandwich,
    envelope_counts,
    envelope_experiment,
    format_report,
    run_exact_suite,
)
from .data import (
    CovarianceModel,
    DataSet,
    GaussianSource,
    ReplaySource,
    SampleSource,
    SpectrumSpec,
    center,
    estimate_bounds,
    load_dataset,
    make_spec_covariance,
    sample_gaussian,
    save_dataset,
)
from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    EmptyDataSet,
    FormatError,
    InsufficientTrials,
    InvalidInputs,
    InvalidSpec,
    KPCAError,
    NonFinite,
    NotGuaranteedRate,
    NotOrthonormal,
    NotSymmetric,
    RankDeficient,
    ZeroSignal,
)
from .linalg import (
    Spectrum,
    derive_seeds,
    orthonormalize_rows,
    random_orthogonal,
    top_k_eigen,
)
from .metrics import (
    DistanceReport,
    GroundTruth,
    canonical_angle_distance,
    distance_report,
    noise_over_signal,
    reconstruction_error,
    subspace_distance,
)
from .solvers import (
    SOLVERS,
    ConvergenceTrace,
    GuaranteedRateInputs,
    RateSchedule,
    SolverState,
    TraceRecord,
    guaranteed_learning_rate,
    initialization_in_basin,
    krasulina_step,
    oja_step,
    orthonormalized,
    pilot_learning_rate,
    power_method_epoch,
    run_stream,
    vr_pca_epoch,
)

__version__ = "0.1.0"
