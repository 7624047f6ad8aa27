"""Optimal investment timing for one-dimensional diffusions.

Threshold rules, their optimality checks, and Monte Carlo cross-checks.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DomainError,
    ExpressionError,
    NoInteriorMaximizer,
    NonPositiveDiffusion,
    ParameterError,
    SeriesNotConverged,
    ShootingError,
    ThresholdOptionsError,
)
from .fundamental import (
    CharacteristicRoot,
    FundamentalSolution,
    Provenance,
    build_psi,
    ode_residual,
    phi_closed_form,
    psi_closed_form,
    psi_numeric,
    psi_series,
    solve_characteristic_root,
)
from .kummer import kummer_1f1
from .montecarlo import (
    SimConfig,
    StoppingEstimate,
    brute_force_best_threshold,
    estimate_hitting_discount,
    estimate_threshold_npv,
    simulate_paths,
)
from .processes import (
    ABMParams,
    CIRParams,
    DiffusionSpec,
    Family,
    GBMParams,
    GeometricOUParams,
    Interval,
    apply_generator,
    check_regularity,
    make_custom,
    make_family,
)
from .threshold import (
    Method,
    ThresholdSolution,
    closed_form_threshold,
    h_eval,
    maximize_h,
    solve_smooth_pasting,
    value_function,
)
from .verification import (
    FbpClass,
    Status,
    VerificationReport,
    classify_fbp_solutions,
    solve_free_boundary,
    verify_remark1,
    verify_theorem1,
    verify_theorem2,
)
