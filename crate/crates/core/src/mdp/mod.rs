//! The SP model: tabular MDPs with a distinguished goal outcome, the
//! all-proper validation check, exact solvers, and model transformations.

mod io;
mod model;
mod solve;

pub use io::{mdp_from_json, mdp_to_json, read_mdp_file, write_mdp_file};
pub use model::{
    add_virtual_init, perturb_rewards, validate, ModelError, Policy, TabularSP, ValidationReport,
    SIMPLEX_TOL,
};
pub use solve::{
    evaluate_policy, hit_time, max_expected_time, policy_sweep_stats, second_moment, solve_optimal,
    PolicyStats, SolveError, SolveResult, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
