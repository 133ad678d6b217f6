"""Correcting outcome-induced bias in ratings under known partial orderings.

Quality scores are estimated jointly with per-rating bias by order-constrained
regularised least squares; the regularisation weight can be chosen by an
ordering-aware cross-validation.  Ships baseline estimators and a seeded
Monte-Carlo harness for synthetic experiments.
"""

from ._kernels import HAVE_COMPILED, backend
from .baselines import (GroupLayout, NotApplicable, mean_estimator,
                        median_estimator, reweighted_mean, reweighted_mean_tree)
from .crossval import (CvReport, Split, cv_error, fit_cv, interpolate,
                       select_lambda, split)
from .data import (GenParams, ObservationSet, RatingMatrix, course_means,
                   dump_ratings, generate_bias, generate_bias_uniform_binary,
                   generate_noise, load_ratings, restrict_ratings, sq_error,
                   synthesize)
from .estimator import (DEFAULT_GRID, FitDiagnostics, Lambda, Solution,
                        closed_form_d2r2, fit, fit_at_zero, lambda_grid)
from .isotonic import (IsotonicFit, OracleResult, SolverError, isotonic_project,
                       pava, qp_oracle, regularized_isotonic)
from .harness import (ESTIMATORS, SCENARIOS, ResultRow, ScenarioConfig,
                      derive_run_seed, lambda_histogram, rows_to_csv,
                      run_rng, run_scenario)
from .poset import (ConstraintSet, Element, PartialOrder, TotalOrder,
                    build_dag_ordering, build_group_ordering,
                    build_total_ordering, build_tree_ordering, classify,
                    dump_poset, load_poset, reduce_constraints,
                    sample_linear_extension, satisfies)

__version__ = "0.1.0"

__all__ = [
    "HAVE_COMPILED", "backend",
    "GroupLayout", "NotApplicable", "mean_estimator", "median_estimator",
    "reweighted_mean", "reweighted_mean_tree",
    "CvReport", "Split", "cv_error", "fit_cv", "interpolate", "select_lambda",
    "split",
    "GenParams", "ObservationSet", "RatingMatrix", "course_means",
    "dump_ratings", "generate_bias", "generate_bias_uniform_binary",
    "generate_noise", "load_ratings", "restrict_ratings", "sq_error",
    "synthesize",
    "DEFAULT_GRID", "FitDiagnostics", "Lambda", "Solution", "closed_form_d2r2",
    "fit", "fit_at_zero", "lambda_grid",
    "IsotonicFit", "OracleResult", "SolverError", "isotonic_project", "pava",
    "qp_oracle", "regularized_isotonic",
    "ESTIMATORS", "SCENARIOS", "ResultRow", "ScenarioConfig", "derive_run_seed",
    "lambda_histogram", "rows_to_csv", "run_rng", "run_scenario",
    "ConstraintSet", "Element", "PartialOrder", "TotalOrder",
    "build_dag_ordering", "build_group_ordering", "build_total_ordering",
    "build_tree_ordering", "classify", "dump_poset", "load_poset",
    "reduce_constraints", "sample_linear_extension", "satisfies",
    "__version__",
]
