"""Stage-structured metapopulation models with dispersal between patches."""
from .closed_forms import (
    GOBY_PAPER_PARAMS,
    GobyTwoPatchParams,
    TwoPatchNewbornDispersal,
    build_example33_model,
    build_goby_model,
    critical_dispersion,
    cubic_positive_root,
    example33_critical_d,
    example33_r0,
    three_patch_residual,
    two_patch_r0,
    usher_r0_closed_form,
    xi_transmission,
)
from .config import ModelConfig, load_config, parse_config
from .demography import LocalDemography, StageVitals, build_usher, local_growth_rate, local_r0
from .dispersion import DispersionSpec, global_dispersion_matrix, local_dispersion_matrix
from .errors import NumericalError, SingularMatrixError, ValidationError
from .graph import SignalFlowGraph, r0_by_graph_reduction, growth_rate_by_graph_reduction
from .linalg import PerronData, is_irreducible, is_primitive, spectral_radius
from .model import (
    AnalysisReport,
    GlobalModel,
    analyze,
    assemble,
    net_reproductive_number,
    next_generation,
    partial_next_generation,
    simulate,
)

__version__ = "0.1.0"
