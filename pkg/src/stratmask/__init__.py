"""Revealed-preference rationality tests and strategy masking.

The package answers three questions about a decision maker that maximizes
utility under budget constraints:

- Utility side: do observed responses under known budgets admit a monotone
  rationalizing utility, and what is its tightest reconstruction?
- Strategy side: do responses under known (adversary-controlled) utilities
  admit a common-base budget sequence, and what is its reconstruction?
- Masking: how should the decision maker minimally violate its own budget
  thresholds so the adversary's reconstruction only passes with a small
  margin, and how robust is that scheme to noisy utility measurements?
"""

__version__ = "0.1.0"

from .dataset import (
    BudgetSpec,
    Dataset,
    MarginReport,
    STRATEGY_TEST,
    UTILITY_TEST,
    Violation,
    kkt_multiplier,
    load_dataset,
    save_dataset,
    validate_dataset,
)
from .functions import (
    CallbackFunction,
    EnvelopeFunction,
    EnvelopePiece,
    FunctionSpec,
    LinearFunction,
    QuadraticFractional,
    finite_difference_gradient,
    function_from_dict,
    register_callback,
    spot_check_monotone,
)
from .masking import (
    CurvePoint,
    MaskingProblem,
    MaskingResult,
    load_scenario,
    mask_strategy,
    naive_responses,
    save_scenario,
    verify_masking,
    violation_curve,
)
from .noise import (
    NoiseModel,
    NoiseStudy,
    analytic_bound,
    empirical_error_probability,
    estimate_constants,
    perturb_utility,
)
from .radar import (
    RadarConfig,
    RadarScenario,
    masking_problem,
    radar_response,
    run_fig2_experiment,
    sample_scenario,
    sinr,
    sinr_spec,
)
from .solvers import (
    FeasibilityResult,
    InequalityRow,
    LinearFeasibilityProblem,
    OptimumPoint,
    SolverOptions,
    coordinate_search_minimize,
    grid_oracle_maximize,
    maximize_concave,
    solve_feasibility,
)
from .strategy_test import (
    BudgetReconstruction,
    best_budget_estimate,
    garp_transformed,
    margin_strategy,
    strategy_feasibility_test,
)
from .utility_test import (
    GarpResult,
    UtilityReconstruction,
    afriat_test,
    best_utility_estimate,
    garp_check,
    integrated_squared_error,
    margin_utility,
)
