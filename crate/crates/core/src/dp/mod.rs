//! Exact dynamic programming over factored and joint action-value tables.

mod bounds;
mod factorization;
mod montecarlo;
mod operators;
mod value_iteration;

pub use bounds::{
    beta_polynomial, bound_l, bound_n_o, lemma1_tail, q_upper, run_probability, run_probability_enumerated,
    run_probability_lower_bound, run_probability_lower_bound_at_root, theorem_product_bound, uspensky_root,
    BoundInputs, Lemma1Tail, ENUMERATION_LIMIT,
};
pub use factorization::{
    check_factorization, delta_gap, enumerate_optimal_policies, extract_all_qstars, extract_factored_qstar,
    joint_maximizers, max_gap, FactorizationReport, GapResult, OptimalPolicies,
};
pub use montecarlo::{montecarlo_lemma_check, BoundSummary, LemmaMode, MonteCarloReport};
pub use operators::{
    apply_be, apply_bi, apply_bp, bellman_targets, greedy_factored_policy, maximizer_set, theorem1_procedure,
    OperatorTrace, TIE_TOL,
};
pub use value_iteration::{solve_joint_optimal, MAX_VALUE_ITERATIONS};
