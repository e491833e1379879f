//! Desk-scale laboratory for goal-terminated ("stochastic path") MDPs:
//! exact tabular solvers, optimistic value-iteration learners with
//! variance-aware bonuses, hard-instance generators, and a seeded
//! experiment harness that measures regret against exactly-solved optima.
//!
//! Conventions used throughout:
//! * States are `0..S`; the terminal (goal) outcome is index `S` in every
//!   transition row. The goal has no outgoing row.
//! * Rewards live in `[-1, 1]`. An SLP has all rewards >= 0, an SSP all <= 0.
//! * All randomness flows through ChaCha8 seeded with an explicit `u64`,
//!   so every trace is reproducible across platforms and thread schedules.

pub mod env;
pub mod harness;
pub mod learner;
pub mod mdp;
pub mod slp;

/// Result of one environment transition: either a non-terminal state or the goal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    State(usize),
    Goal,
}

impl Outcome {
    /// Flat outcome index with the goal mapped to `num_states`.
    pub fn index(self, num_states: usize) -> usize {
        match self {
            Outcome::State(s) => s,
            Outcome::Goal => num_states,
        }
    }

    pub fn is_goal(self) -> bool {
        matches!(self, Outcome::Goal)
    }
}
