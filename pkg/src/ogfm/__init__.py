"""Multi-response regression with overlapping group and fused sparsity.

The penalized model selects variable effects jointly across hierarchical
outcome groups and shrinks related outcomes' effects toward exact equality.
Fitting uses a three-block alternating-direction scheme with exact
proximal updates for both penalties; regularization paths, k-fold
cross-validation, scikit-learn style estimators, a synthetic-data harness
and a CLI are layered on top of the solver.
"""

from .constraints import (ConstraintMatrices, build_constraint_matrices,
                          coef_index, compute_hull, detect_structure,
                          group_replication_matrix, pair_difference_matrix)
from .data import (CoefficientMatrix, ProblemData, destandardize_matrix,
                   standardize_matrix)
from .estimators import GroupFusedRegressor, GroupFusedRegressorCV
from .exceptions import (DimensionMismatchError, LinearSolveError,
                         SingularDesignError)
from .grouping import (OutcomeGrouping, build_grouping, parse_group_file,
                       singleton_grouping)
from .path import (CVResult, PathSpec, cross_validate, fit_path,
                   make_lambda_grid, predict)
from .penalties import PenaltyConfig, eval_objective, eval_penalties
from .simulate import (SimulationScenario, TrueModel, TuningProtocol,
                       avg_rmse, balanced_accuracy, gen_beta0,
                       gen_gaussian_data, gen_ordinal_data, model_error,
                       ordinal_levels, parse_scenario_file, results_to_csv,
                       run_scenario, validation_r2)
from .solver import (AdmmEngine, FitResult, SolverOptions, SolverState,
                     block_soft_threshold, fit, soft_threshold)
from .weights import (WeightScheme, build_penalty_config,
                      compute_adaptive_weights, compute_marginal_weights_base,
                      compute_ols, make_nonadaptive_weights)

__version__ = "0.1.0"

__all__ = [
    "AdmmEngine", "CVResult", "CoefficientMatrix", "ConstraintMatrices",
    "DimensionMismatchError", "FitResult", "GroupFusedRegressor",
    "GroupFusedRegressorCV", "LinearSolveError", "OutcomeGrouping",
    "PathSpec", "PenaltyConfig", "ProblemData", "SimulationScenario",
    "SingularDesignError", "SolverOptions", "SolverState", "TrueModel",
    "TuningProtocol", "avg_rmse", "balanced_accuracy",
    "block_soft_threshold", "build_constraint_matrices", "build_grouping",
    "build_penalty_config", "coef_index", "compute_adaptive_weights",
    "compute_hull", "compute_marginal_weights_base", "compute_ols",
    "cross_validate", "destandardize_matrix", "detect_structure",
    "eval_objective", "eval_penalties", "fit", "fit_path", "gen_beta0",
    "gen_gaussian_data", "gen_ordinal_data", "group_replication_matrix",
    "make_lambda_grid", "make_nonadaptive_weights", "model_error",
    "ordinal_levels", "pair_difference_matrix", "parse_group_file",
    "parse_scenario_file", "predict", "results_to_csv", "run_scenario",
    "singleton_grouping", "soft_threshold", "standardize_matrix",
    "validation_r2", "WeightScheme",
]
