"""
mis_balance
Generalized balance-heuristic multiple importance sampling: estimators,
exact variances and bounds by quadrature, optimal alpha/beta, and the
benchmark harness for the five built-in example problems.
"""

from mis_balance.analysis import (
    BoundsReport,
    MomentTable,
    bounds_biased,
    bounds_unbiased,
    generalized_bound,
    inverse_efficiency,
    mixture_pdf,
    moments,
    variance_f1,
    variance_g1,
    variance_gap,
    weighted_mean,
)
from mis_balance.errors import MisError
from mis_balance.estimators import (
    EstimateRun,
    RngSeed,
    empirical_variance,
    estimate_f,
    estimate_g,
    estimate_linear,
    estimate_randomized,
)
from mis_balance.model import (
    Allocation,
    Problem,
    SimplexVector,
    Technique,
    allocate,
    builtin_strategies,
    example_problem,
)
from mis_balance.optimize import (
    SolverConfig,
    case1_residual,
    case3_residual,
    dominance_compare,
    optimal_beta,
    optimal_beta_with_costs,
    solve_alpha,
)
from mis_balance.quadrature import Interval, QuadratureConfig, integrate, inverse_cdf
