"""Exact statistical-mechanics models, decoders, and bounds for repeated stabilizer measurement."""

from .bounds import (
    BoundResult,
    build_classical_graph,
    double_flux_bound,
    enumerate_irreducible_clusters,
    hardwall_stability_bound,
    memory_failure_bound,
    single_flux_bound,
    two_puncture_bound,
)
from .codes import (
    CodeParams,
    CssCode,
    build_repetition_code,
    build_toric_code,
    code_from_json,
    code_to_json,
    compute_distance_bruteforce,
    validate_css,
)
from .decoders import (
    MlResult,
    MwpmResult,
    MwResult,
    majority_vote_region,
    ml_decode_all,
    ml_decode_logical,
    mw_decode,
    mwpm_repetition,
)
from .errors import (
    InconsistentBoundary,
    InvalidInput,
    InvalidParameter,
    StatqecError,
    UnsupportedCode,
    UnsupportedSize,
    ValidationError,
)
from .experiments import (
    ExperimentResult,
    FluxThreadingConfig,
    StabilizerRegion,
    default_region,
    exact_flux_failure,
    exact_success_probabilities,
    order_parameter_scan,
    run_flux_threading,
    run_memory_experiment,
    run_stability_hardwall,
    run_two_puncture,
    wilson_interval,
)
from .noise import (
    Couplings,
    ErrorPattern,
    NoiseParams,
    SyndromeHistory,
    couplings_from_params,
    detection_events,
    log_probability,
    nishimori_coupling,
    sample_error,
    syndrome_of,
)
from .report import (
    bound_overlay_figure,
    boundary_figure,
    decay_figure,
    failure_curves_figure,
    render_cells,
    save_figure,
    write_cells,
)
from .statmech import (
    StatMechModel,
    apply_gauge_transformation,
    build_clean_model,
    build_event_model,
    build_gauge_model,
    build_syndrome_model,
    exact_expectation,
    exact_log_partition,
    model_energy,
    qubit_spin,
)
from .sweep import (
    BoundaryFit,
    BoundaryScan,
    BoundaryScanConfig,
    SweepCell,
    SweepConfig,
    boundary_scan,
    find_crossing,
    fit_boundary,
    threshold_sweep,
)
from .transfer import (
    TransferMatrix,
    build_transfer_matrix,
    quantum_hamiltonian,
    spectral_summary,
)

__version__ = "0.1.0"

__all__ = [
    "BoundResult",
    "BoundaryFit",
    "BoundaryScan",
    "BoundaryScanConfig",
    "CodeParams",
    "Couplings",
    "CssCode",
    "ErrorPattern",
    "ExperimentResult",
    "FluxThreadingConfig",
    "InconsistentBoundary",
    "InvalidInput",
    "InvalidParameter",
    "MlResult",
    "MwResult",
    "MwpmResult",
    "NoiseParams",
    "StabilizerRegion",
    "StatMechModel",
    "StatqecError",
    "SweepCell",
    "SweepConfig",
    "SyndromeHistory",
    "TransferMatrix",
    "UnsupportedCode",
    "UnsupportedSize",
    "ValidationError",
    "apply_gauge_transformation",
    "bound_overlay_figure",
    "boundary_figure",
    "boundary_scan",
    "build_classical_graph",
    "build_clean_model",
    "build_event_model",
    "build_gauge_model",
    "build_repetition_code",
    "build_syndrome_model",
    "build_toric_code",
    "build_transfer_matrix",
    "code_from_json",
    "code_to_json",
    "compute_distance_bruteforce",
    "couplings_from_params",
    "decay_figure",
    "default_region",
    "detection_events",
    "double_flux_bound",
    "enumerate_irreducible_clusters",
    "exact_expectation",
    "exact_flux_failure",
    "exact_log_partition",
    "exact_success_probabilities",
    "failure_curves_figure",
    "find_crossing",
    "fit_boundary",
    "hardwall_stability_bound",
    "log_probability",
    "majority_vote_region",
    "memory_failure_bound",
    "ml_decode_all",
    "ml_decode_logical",
    "model_energy",
    "mw_decode",
    "mwpm_repetition",
    "nishimori_coupling",
    "order_parameter_scan",
    "qubit_spin",
    "quantum_hamiltonian",
    "render_cells",
    "run_flux_threading",
    "run_memory_experiment",
    "run_stability_hardwall",
    "run_two_puncture",
    "sample_error",
    "save_figure",
    "single_flux_bound",
    "spectral_summary",
    "syndrome_of",
    "threshold_sweep",
    "two_puncture_bound",
    "validate_css",
    "wilson_interval",
    "write_cells",
    "__version__",
]
