"""
iwpairs: computational potential theory of one-dimensional diffusions.

This package classifies boundaries relative to an additive functional, solves
the integral equations whose solutions are the fundamental subharmonic
functions psi and phi, decomposes subharmonic functions into extremal kernels,
builds the transient path transformation, and checks the resulting identities
by Monte Carlo.
"""

__version__ = "0.1.0"

from .boundary import (
    BoundaryClass,
    BoundaryKind,
    BoundaryReport,
    classify,
    classify_both,
    entrance_escape_bound,
)
from .diffusion import (
    AnalyticScale,
    DiffusionSpec,
    ScaleFunction,
    TableScale,
    exit_distribution,
    green_kernel,
    hitting_prob,
    is_transient,
    killed_potential_density,
    pcaf_finiteness,
    pcaf_potential,
    potential_density,
    sde_coefficients,
)
from .exceptions import (
    ConfigParseError,
    InadmissibleError,
    InconclusiveError,
    IWPairsError,
    PreconditionError,
)
from .expressions import compile_expression
from .grid import GridFunction, geometric_grid, uniform_grid
from .measures import IntegralVerdict, RadonMeasure, Side, improper_integral, integrate, ramp_integral
from .montecarlo import (
    LocalTimeEstimator,
    PathEnsemble,
    SimConfig,
    accumulate_pcaf,
    calibrate_local_time,
    check_iw_martingale,
    check_last_passage,
    check_local_time_law,
    check_natural_representation,
    check_vanishing,
    compare_measure_change,
    simulate,
    summary_table,
)
from .solver import (
    Direction,
    EquationSpec,
    FundamentalPair,
    anchored_residual,
    apply_T,
    compare_solutions,
    fit_pair,
    fundamental_pair,
    general_solution,
    solve,
    solve_natural,
    boundary_table_report,
    verify_pair,
)
from .subharmonic import (
    boundary_behaviour,
    check_subharmonic,
    choquet_decompose,
    choquet_reconstruct,
    compensator_measure,
    s_derivative,
)
from .transform import (
    TransformedDiffusion,
    likelihood_ratio,
    q_drift,
    q_hitting,
    q_local_time_mean,
    revuz_under_Q,
    scale_slopes,
    transform,
    transience_report,
)

__all__ = [
    "__version__",
    "AnalyticScale",
    "BoundaryClass",
    "BoundaryKind",
    "BoundaryReport",
    "ConfigParseError",
    "DiffusionSpec",
    "Direction",
    "EquationSpec",
    "FundamentalPair",
    "GridFunction",
    "IWPairsError",
    "InadmissibleError",
    "InconclusiveError",
    "IntegralVerdict",
    "LocalTimeEstimator",
    "PathEnsemble",
    "PreconditionError",
    "RadonMeasure",
    "ScaleFunction",
    "Side",
    "SimConfig",
    "TableScale",
    "TransformedDiffusion",
    "accumulate_pcaf",
    "anchored_residual",
    "apply_T",
    "boundary_behaviour",
    "calibrate_local_time",
    "check_iw_martingale",
    "check_last_passage",
    "check_local_time_law",
    "check_natural_representation",
    "check_subharmonic",
    "check_vanishing",
    "choquet_decompose",
    "choquet_reconstruct",
    "classify",
    "classify_both",
    "compare_measure_change",
    "compare_solutions",
    "compensator_measure",
    "compile_expression",
    "entrance_escape_bound",
    "exit_distribution",
    "fit_pair",
    "fundamental_pair",
    "general_solution",
    "geometric_grid",
    "green_kernel",
    "hitting_prob",
    "improper_integral",
    "integrate",
    "is_transient",
    "killed_potential_density",
    "likelihood_ratio",
    "pcaf_finiteness",
    "pcaf_potential",
    "potential_density",
    "q_drift",
    "q_hitting",
    "q_local_time_mean",
    "ramp_integral",
    "revuz_under_Q",
    "s_derivative",
    "scale_slopes",
    "sde_coefficients",
    "simulate",
    "solve",
    "solve_natural",
    "summary_table",
    "boundary_table_report",
    "transform",
    "transience_report",
    "uniform_grid",
    "verify_pair",
]
