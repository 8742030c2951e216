//! Distributional and downstream evaluation of generated samples.

mod coverage;
mod downstream;
mod prop3;
mod repair;
mod w1;

pub use coverage::{mode_coverage, Coverage, COVERAGE_MASS};
pub use downstream::{
    auc, best_threshold, downstream_score, logistic_fit_predict, pareto_frontier, s_t_score, statistical_parity,
    DownstreamScore, LogisticModel, LOGISTIC_L2, LOGISTIC_MAX_ITER,
};
pub use prop3::{check_prop3_moments, prop3_closed_form, Prop3Estimate, MIN_DRAWS};
pub use repair::geo_repair;
pub use w1::{solve_assignment, w1_distance, w1_sorted_1d, W1Method, W1Result, EXACT_ASSIGNMENT_CAP};
