"""Geodesic recovery on sampled manifolds by propagating coherent wave packets
with a graph-Laplacian wave equation."""

__version__ = "0.1.0"

from .errors import (
    ConditioningWarning,
    DataError,
    DegenerateNeighborhood,
    DegenerateState,
    DisconnectedGraph,
    InvalidArgument,
    NumericalFailure,
    ParseError,
    PipelineStageError,
    QManifoldError,
    SparseNeighborhood,
    UncertaintyRegimeViolation,
    UnsupportedOracle,
)
from .sampling import (
    GeodesicOracle,
    PointCloud,
    add_noise,
    make_oracle,
    oracle_distance,
    sample_circle,
    sample_loop_mixture,
    sample_sphere,
    sample_swiss_roll,
    sample_torus,
)
from .spectral import (
    KernelGraph,
    SpectralLaplacian,
    StateVector,
    apply_propagator,
    auto_epsilon,
    build_kernel,
    build_laplacian,
    conserved_norm,
    laplacian_for,
    load_laplacian,
    save_laplacian,
)
from .coherent import (
    MomentumEstimator,
    PhaseSpacePoint,
    estimate_momentum,
    prepare_coherent_state,
    prepare_impulse,
    uncertainty_from_scale,
)
from .propagation import (
    GeodesicGraph,
    PropagationResult,
    TrialSet,
    build_geodesic_graph,
    propagate,
    run_trials,
    shoot_geodesic,
    wavepacket_profile,
)
from .phase_space import PhaseSpaceGrid, Spectrogram, gabor_coefficient, make_grid, position_marginal, spectrogram
from .organization import ClusterAssignment, EmbeddingResult, cluster_summaries, fr_embed, kmeans
from .pipeline import PipelineConfig, emit_profile_plot_data, ingest_csv, load_config, run_pipeline, verify_run

__all__ = [
    "ConditioningWarning",
    "DataError",
    "DegenerateNeighborhood",
    "DegenerateState",
    "DisconnectedGraph",
    "InvalidArgument",
    "NumericalFailure",
    "ParseError",
    "PipelineStageError",
    "QManifoldError",
    "SparseNeighborhood",
    "UncertaintyRegimeViolation",
    "UnsupportedOracle",
    "GeodesicOracle",
    "PointCloud",
    "add_noise",
    "make_oracle",
    "oracle_distance",
    "sample_circle",
    "sample_loop_mixture",
    "sample_sphere",
    "sample_swiss_roll",
    "sample_torus",
    "KernelGraph",
    "SpectralLaplacian",
    "StateVector",
    "apply_propagator",
    "auto_epsilon",
    "build_kernel",
    "build_laplacian",
    "conserved_norm",
    "laplacian_for",
    "load_laplacian",
    "save_laplacian",
    "MomentumEstimator",
    "PhaseSpacePoint",
    "estimate_momentum",
    "prepare_coherent_state",
    "prepare_impulse",
    "uncertainty_from_scale",
    "GeodesicGraph",
    "PropagationResult",
    "TrialSet",
    "build_geodesic_graph",
    "propagate",
    "run_trials",
    "shoot_geodesic",
    "wavepacket_profile",
    "PhaseSpaceGrid",
    "Spectrogram",
    "gabor_coefficient",
    "make_grid",
    "position_marginal",
    "spectrogram",
    "ClusterAssignment",
    "EmbeddingResult",
    "cluster_summaries",
    "fr_embed",
    "kmeans",
    "PipelineConfig",
    "emit_profile_plot_data",
    "ingest_csv",
    "load_config",
    "run_pipeline",
    "verify_run",
]
