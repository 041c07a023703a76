"""Coded slotted ALOHA threshold analysis over multi-packet-reception channels.

Asymptotic load thresholds by density evolution, the area-matching converse
bound on achievable (rate, load) pairs, spatially-coupled chain thresholds,
and a finite-frame Monte Carlo simulator for cross-validation.
"""

__version__ = "0.1.0"

from .bound import (
    AreaCondition,
    BoundPropertyReport,
    BoundQuery,
    BoundResult,
    area_condition,
    converse_bound,
    poisson_capped_mean,
    slice_transfer_area,
    user_transfer_area,
    verify_bound_properties,
)
from .codes import (
    CodeSpec,
    InfoFunctionTable,
    info_function,
    map_recoverable,
    rank_gf2,
    repetition_code,
    single_parity_check_code,
    validate_code,
)
from .de_core import (
    DEParams,
    DETrace,
    Ensemble,
    ThresholdResult,
    density_evolution,
    edge_degree_pmf,
    load_threshold,
    poisson_tail,
    repetition_ensemble,
    slice_degree_pmf,
    slice_transfer,
    slice_transfer_series,
    user_transfer,
)
from .errors import BracketError, ConvergenceError, ValidationError
from .sc_de import (
    ChainStructure,
    ChainThreshold,
    CoupledConfig,
    CoupledState,
    CoupledThresholdResult,
    build_chain,
    coupled_density_evolution,
    coupled_threshold,
)
from .simulator import (
    DecodeResult,
    FrameRealization,
    SimConfig,
    SimResult,
    generate_frame,
    run_trials,
    sic_decode,
)

__all__ = [
    "AreaCondition",
    "BoundPropertyReport",
    "BoundQuery",
    "BoundResult",
    "BracketError",
    "ChainStructure",
    "ChainThreshold",
    "CodeSpec",
    "ConvergenceError",
    "CoupledConfig",
    "CoupledState",
    "CoupledThresholdResult",
    "DEParams",
    "DETrace",
    "DecodeResult",
    "Ensemble",
    "FrameRealization",
    "InfoFunctionTable",
    "SimConfig",
    "SimResult",
    "ThresholdResult",
    "ValidationError",
    "area_condition",
    "build_chain",
    "converse_bound",
    "coupled_density_evolution",
    "coupled_threshold",
    "density_evolution",
    "edge_degree_pmf",
    "generate_frame",
    "info_function",
    "load_threshold",
    "map_recoverable",
    "poisson_capped_mean",
    "poisson_tail",
    "rank_gf2",
    "repetition_code",
    "repetition_ensemble",
    "run_trials",
    "sic_decode",
    "single_parity_check_code",
    "slice_degree_pmf",
    "slice_transfer",
    "slice_transfer_area",
    "slice_transfer_series",
    "user_transfer",
    "user_transfer_area",
    "validate_code",
    "verify_bound_properties",
]
