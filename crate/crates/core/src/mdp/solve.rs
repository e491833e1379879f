//! Exact solvers: optimal values by value iteration plus an exact greedy
//! re-evaluation, policy evaluation / second moments / hitting times by
//! direct linear solves, and brute-force policy sweeps for the
//! root-second-moment range measures.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::model::{validate, Policy, TabularSP};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("model violates the all-proper assumption (trapping set {0:?})")]
    NotProper(Vec<usize>),
    #[error("value iteration did not converge: residual {residual} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: u64 },
    #[error("linear system is singular")]
    SingularSystem,
    #[error("policy enumeration needs {needed} policies, limit is {limit}")]
    EnumLimitExceeded { needed: u128, limit: u64 },
}

/// Exact optimal solution of a stochastic-path MDP.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    /// V*(s) for s in 0..=S; the goal entry is 0.
    pub values: Vec<f64>,
    /// Q*(s,a).
    pub q_values: Vec<Vec<f64>>,
    /// An optimal stationary deterministic policy (greedy, smallest-index ties).
    pub policy: Policy,
    /// |V*(s_init)|.
    pub v_star: f64,
    /// max_s |V*(s)|.
    pub b_star: f64,
    /// Final Bellman residual of the reported values.
    pub residual: f64,
    /// Value-iteration sweeps used.
    pub iterations: u64,
}

impl SolveResult {
    /// Signed optimal value of the initial state.
    pub fn init_value(&self, mdp: &TabularSP) -> f64 {
        self.values[mdp.init_state()]
    }
}

fn expectation(row: &[f64], values: &[f64]) -> f64 {
    row.iter().zip(values).map(|(p, v)| p * v).sum()
}

/// Solves for V*/Q* by value iteration on the Bellman optimality operator,
/// then extracts the greedy policy (ties to the smallest action index) and
/// re-evaluates it with an exact linear solve, so the reported values carry
/// no iteration error.
pub fn solve_optimal(mdp: &TabularSP, tol: f64, max_iter: u64) -> Result<SolveResult, SolveError> {
    let report = validate(mdp);
    if !report.all_proper {
        return Err(SolveError::NotProper(report.trapping_set.unwrap_or_default()));
    }
    let s_n = mdp.num_states();
    let a_n = mdp.num_actions();

    let mut values = vec![0.0; s_n + 1];
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while iterations < max_iter {
        iterations += 1;
        change = 0.0;
        for s in 0..s_n {
            let best = (0..a_n)
                .map(|a| mdp.reward(s, a) + expectation(mdp.transition_row(s, a), &values))
                .fold(f64::NEG_INFINITY, f64::max);
            change = change.max((best - values[s]).abs());
            values[s] = best;
        }
        if change <= tol {
            break;
        }
    }
    if change > tol {
        return Err(SolveError::NoConvergence {
            residual: change,
            iterations,
        });
    }

    // Greedy extraction from the iterate.
    let mut action_of = vec![0usize; s_n];
    for (s, slot) in action_of.iter_mut().enumerate() {
        let mut best_q = f64::NEG_INFINITY;
        for a in 0..a_n {
            let q = mdp.reward(s, a) + expectation(mdp.transition_row(s, a), &values);
            if q > best_q {
                best_q = q;
                *slot = a;
            }
        }
    }
    let policy = Policy::new(action_of);

    // Exact values of the greedy policy.
    let exact = evaluate_policy(mdp, &policy)?;
    let mut values = exact;
    values.push(0.0);

    let mut q_values = vec![vec![0.0; a_n]; s_n];
    let mut residual: f64 = 0.0;
    for (s, row) in q_values.iter_mut().enumerate() {
        for (a, q) in row.iter_mut().enumerate() {
            *q = mdp.reward(s, a) + expectation(mdp.transition_row(s, a), &values);
        }
        let v_greedy = row.iter().fold(f64::NEG_INFINITY, |m, &q| m.max(q));
        residual = residual.max((v_greedy - values[s]).abs());
    }

    let v_star = values[mdp.init_state()].abs();
    let b_star = values[..s_n].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(SolveResult {
        values,
        q_values,
        policy,
        v_star,
        b_star,
        residual,
        iterations,
    })
}

/// States from which the goal is reachable under `pi` (positive-probability
/// paths). For a finite chain this is exactly the set absorbed at g with
/// probability one, so the policy is proper iff every state is in it.
fn goal_reachable_under(mdp: &TabularSP, pi: &Policy) -> Vec<bool> {
    let s_n = mdp.num_states();
    let mut reaches = vec![false; s_n];
    loop {
        let mut changed = false;
        for s in 0..s_n {
            if reaches[s] {
                continue;
            }
            let row = mdp.transition_row(s, pi.action(s));
            let hit = row[s_n] > 0.0 || (0..s_n).any(|sp| row[sp] > 0.0 && reaches[sp]);
            if hit {
                reaches[s] = true;
                changed = true;
            }
        }
        if !changed {
            return reaches;
        }
    }
}

fn check_policy_proper(mdp: &TabularSP, pi: &Policy) -> Result<(), SolveError> {
    let reaches = goal_reachable_under(mdp, pi);
    if reaches.iter().all(|&r| r) {
        Ok(())
    } else {
        Err(SolveError::NotProper(
            (0..mdp.num_states()).filter(|&s| !reaches[s]).collect(),
        ))
    }
}

/// Solves `(I - P_pi) x = rhs` over the non-goal states.
fn solve_linear(mdp: &TabularSP, pi: &Policy, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
    let s_n = mdp.num_states();
    let mat = DMatrix::from_fn(s_n, s_n, |i, j| {
        let p = mdp.transition_row(i, pi.action(i))[j];
        if i == j {
            1.0 - p
        } else {
            -p
        }
    });
    let b = DVector::from_row_slice(rhs);
    mat.lu()
        .solve(&b)
        .map(|x| x.iter().copied().collect())
        .ok_or(SolveError::SingularSystem)
}

/// Exact state values of a stationary deterministic policy: the solution of
/// `V = r_pi + P_pi V` with `V(g) = 0`.
pub fn evaluate_policy(mdp: &TabularSP, pi: &Policy) -> Result<Vec<f64>, SolveError> {
    check_policy_proper(mdp, pi)?;
    let rhs: Vec<f64> = (0..mdp.num_states())
        .map(|s| mdp.reward(s, pi.action(s)))
        .collect();
    solve_linear(mdp, pi, &rhs)
}

/// Second moment of the cumulative episode reward under `pi`:
/// `M(s) = E^pi[(sum r)^2 | s_1 = s]`, from the recursion
/// `M = r^2 + 2 r (P_pi V) + P_pi M` with `M(g) = 0`.
pub fn second_moment(mdp: &TabularSP, pi: &Policy) -> Result<Vec<f64>, SolveError> {
    let v = evaluate_policy(mdp, pi)?;
    let s_n = mdp.num_states();
    let rhs: Vec<f64> = (0..s_n)
        .map(|s| {
            let r = mdp.reward(s, pi.action(s));
            let row = mdp.transition_row(s, pi.action(s));
            let pv: f64 = (0..s_n).map(|sp| row[sp] * v[sp]).sum();
            r * r + 2.0 * r * pv
        })
        .collect();
    solve_linear(mdp, pi, &rhs)
}

/// Expected steps to reach g under `pi`: solution of `h = 1 + P_pi h`.
pub fn hit_time(mdp: &TabularSP, pi: &Policy) -> Result<Vec<f64>, SolveError> {
    check_policy_proper(mdp, pi)?;
    solve_linear(mdp, pi, &vec![1.0; mdp.num_states()])
}

/// Worst-case expected time to goal: value iteration on
/// `T(s) = 1 + max_a sum_{s' != g} P(s'|s,a) T(s')`. Returns the per-state
/// vector and its maximum.
pub fn max_expected_time(
    mdp: &TabularSP,
    tol: f64,
    max_iter: u64,
) -> Result<(Vec<f64>, f64), SolveError> {
    let report = validate(mdp);
    if !report.all_proper {
        return Err(SolveError::NotProper(report.trapping_set.unwrap_or_default()));
    }
    let s_n = mdp.num_states();
    let a_n = mdp.num_actions();
    let mut t = vec![0.0; s_n];
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while iterations < max_iter {
        iterations += 1;
        change = 0.0;
        for s in 0..s_n {
            let worst = (0..a_n)
                .map(|a| {
                    let row = mdp.transition_row(s, a);
                    1.0 + (0..s_n).map(|sp| row[sp] * t[sp]).sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            change = change.max((worst - t[s]).abs());
            t[s] = worst;
        }
        if change <= tol {
            break;
        }
    }
    if change > tol {
        return Err(SolveError::NoConvergence {
            residual: change,
            iterations,
        });
    }
    let t_max = t.iter().fold(0.0f64, |m, &x| m.max(x));
    Ok((t, t_max))
}

/// Per-policy statistics of the optimal policy plus brute-force
/// root-second-moment ranges over all stationary deterministic policies.
///
/// `r_hat`/`r_max_hat` are lower approximations of the range measures
/// R/R_max, whose suprema run over history-dependent policies and are not
/// computable by per-state dynamic programming.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyStats {
    pub value: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub hit_time: Vec<f64>,
    /// max_s sqrt(M^{pi*}(s)).
    pub r_star: f64,
    /// max over policies and states of expected time to goal.
    pub t_max: f64,
    /// max_pi sqrt(M^pi(s_init)) over stationary deterministic policies.
    pub r_hat: f64,
    /// max_pi max_s sqrt(M^pi(s)) over stationary deterministic policies.
    pub r_max_hat: f64,
}

/// Enumerates all `A^S` stationary deterministic policies and fills
/// [`PolicyStats`]. Errors with [`SolveError::EnumLimitExceeded`] when the
/// policy count exceeds `enum_limit`.
pub fn policy_sweep_stats(mdp: &TabularSP, enum_limit: u64) -> Result<PolicyStats, SolveError> {
    let s_n = mdp.num_states();
    let a_n = mdp.num_actions();
    let needed = (a_n as u128)
        .checked_pow(s_n as u32)
        .unwrap_or(u128::MAX);
    if needed > enum_limit as u128 {
        return Err(SolveError::EnumLimitExceeded {
            needed,
            limit: enum_limit,
        });
    }

    let solved = solve_optimal(mdp, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let value = evaluate_policy(mdp, &solved.policy)?;
    let sm = second_moment(mdp, &solved.policy)?;
    let ht = hit_time(mdp, &solved.policy)?;
    let r_star = sm.iter().fold(0.0f64, |m, &x| m.max(x.max(0.0).sqrt()));
    let (_, t_max) = max_expected_time(mdp, DEFAULT_TOL, DEFAULT_MAX_ITER)?;

    let mut r_hat_sq: f64 = 0.0;
    let mut r_max_hat_sq: f64 = 0.0;
    let mut actions = vec![0usize; s_n];
    loop {
        let pi = Policy::new(actions.clone());
        let m = second_moment(mdp, &pi)?;
        r_hat_sq = r_hat_sq.max(m[mdp.init_state()]);
        r_max_hat_sq = m.iter().fold(r_max_hat_sq, |acc, &x| acc.max(x));

        // odometer over action assignments
        let mut digit = 0;
        loop {
            if digit == s_n {
                return Ok(PolicyStats {
                    value,
                    second_moment: sm,
                    hit_time: ht,
                    r_star,
                    t_max,
                    r_hat: r_hat_sq.max(0.0).sqrt(),
                    r_max_hat: r_max_hat_sq.max(0.0).sqrt(),
                });
            }
            actions[digit] += 1;
            if actions[digit] < a_n {
                break;
            }
            actions[digit] = 0;
            digit += 1;
        }
    }
}
