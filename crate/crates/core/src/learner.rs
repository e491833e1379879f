//! Optimistic value-iteration learners with variance-aware exploration
//! bonuses, in two modes:
//!
//! * `SpFixedB`, the known-scale learner: Q and V start at B and are only
//!   ever lowered through min-updates, so estimates stay optimistic while
//!   the empirical model sharpens.
//! * `SspAdaptive`, the unknown-scale shortest-path learner: Q and V start
//!   at 0, and an internal scale B (starting at 1) doubles whenever a
//!   tentative update would fall outside [-B, 0].
//!
//! The learner is a single-run, single-writer object: the harness owns the
//! environment and episode resets; the learner only signals episode ends.

use thiserror::Error;

use crate::Outcome;

pub const DEFAULT_C1: f64 = 2.0;
pub const DEFAULT_C2: f64 = 8.0;
pub const DEFAULT_DELTA: f64 = 0.1;

/// Doublings allowed within a single observe call before the run is
/// declared broken. Unreachable in practice: desk-scale step counts cap
/// the scale any commit can require.
pub const MAX_DOUBLINGS_PER_STEP: u32 = 64;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("bad learner config: {0}")]
    BadConfig(String),
    #[error("protocol violation: observe({got:?}) does not match pending action {expected:?}")]
    ProtocolViolation {
        expected: Option<(usize, usize)>,
        got: (usize, usize),
    },
    #[error("scale doubled more than {MAX_DOUBLINGS_PER_STEP} times in one step (t = {step})")]
    DoublingCapExceeded { step: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Mode {
    SpFixedB,
    SspAdaptive,
}

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct LearnerConfig {
    /// Fixed scale for `SpFixedB`; starting scale for `SspAdaptive`.
    pub b_init: f64,
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
    pub mode: Mode,
}

impl LearnerConfig {
    pub fn sp_fixed(b: f64) -> Self {
        Self {
            b_init: b,
            delta: DEFAULT_DELTA,
            c1: DEFAULT_C1,
            c2: DEFAULT_C2,
            mode: Mode::SpFixedB,
        }
    }

    pub fn ssp_adaptive() -> Self {
        Self {
            b_init: 1.0,
            delta: DEFAULT_DELTA,
            c1: DEFAULT_C1,
            c2: DEFAULT_C2,
            mode: Mode::SspAdaptive,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_constants(mut self, c1: f64, c2: f64) -> Self {
        self.c1 = c1;
        self.c2 = c2;
        self
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        if !self.b_init.is_finite() || self.b_init < 1.0 {
            return Err(LearnerError::BadConfig(format!(
                "b_init = {} must be >= 1",
                self.b_init
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(LearnerError::BadConfig(format!(
                "delta = {} must lie in (0,1)",
                self.delta
            )));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(LearnerError::BadConfig("c1, c2 must be positive".into()));
        }
        if 2.0 * self.c1 * self.c1 > self.c2 {
            return Err(LearnerError::BadConfig(format!(
                "need 2*c1^2 <= c2, got c1 = {}, c2 = {}",
                self.c1, self.c2
            )));
        }
        Ok(())
    }
}

/// Confidence term `ln(SA/delta) + ln ln(B n)`, with the inner argument
/// clamped at e so the double log is finite and nonnegative for all n >= 1.
pub fn iota(sa: usize, delta: f64, b: f64, n: u64) -> f64 {
    (sa as f64 / delta).ln() + (b * n as f64).ln().max(1.0).ln()
}

/// Exploration bonus `max{ c1 sqrt(var * iota / n), c2 B iota / n }`.
pub fn bonus(var: f64, n: u64, b: f64, iota_val: f64, c1: f64, c2: f64) -> f64 {
    let nf = n as f64;
    (c1 * (var * iota_val / nf).sqrt()).max(c2 * b * iota_val / nf)
}

/// Everything a step audit needs: the committed update and the bonus terms
/// that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: u64,
    pub k: u64,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub outcome: Outcome,
    pub bonus: f64,
    pub iota: f64,
    pub b_cur: f64,
    pub q_committed: f64,
    pub episode_ended: bool,
}

#[derive(Clone, Debug)]
pub struct Learner {
    cfg: LearnerConfig,
    num_states: usize,
    num_actions: usize,
    q: Vec<Vec<f64>>,
    /// Length S+1; the goal entry is pinned at 0.
    v: Vec<f64>,
    n: Vec<Vec<u64>>,
    n3: Vec<Vec<Vec<u64>>>,
    t: u64,
    k: u64,
    b_cur: f64,
    pending: Option<(usize, usize)>,
}

impl Learner {
    pub fn new(num_states: usize, num_actions: usize, cfg: LearnerConfig) -> Result<Self, LearnerError> {
        cfg.validate()?;
        if num_states == 0 || num_actions == 0 {
            return Err(LearnerError::BadConfig("need S >= 1 and A >= 1".into()));
        }
        let fill = match cfg.mode {
            Mode::SpFixedB => cfg.b_init,
            Mode::SspAdaptive => 0.0,
        };
        let mut v = vec![fill; num_states + 1];
        v[num_states] = 0.0;
        Ok(Self {
            cfg,
            num_states,
            num_actions,
            q: vec![vec![fill; num_actions]; num_states],
            v,
            n: vec![vec![0; num_actions]; num_states],
            n3: vec![vec![vec![0; num_states + 1]; num_actions]; num_states],
            t: 0,
            k: 0,
            b_cur: cfg.b_init,
            pending: None,
        })
    }

    /// Greedy action on `state`, ties to the smallest index. Records the
    /// pair so [`Self::observe`] can enforce the interaction protocol.
    pub fn select_action(&mut self, state: usize) -> usize {
        let row = &self.q[state];
        let mut best = 0;
        for a in 1..self.num_actions {
            if row[a] > row[best] {
                best = a;
            }
        }
        self.pending = Some((state, best));
        best
    }

    /// Feeds one transition back into the learner and commits the Q update.
    ///
    /// Both modes form the empirical model from the visit counters and add
    /// the variance-aware bonus; `SspAdaptive` first searches for a scale B
    /// large enough that the tentative value fits in [-B, 0], doubling as
    /// needed. Returns the step record; `episode_ended` is set when the
    /// transition hit the goal (the caller owns the reset to the initial
    /// state).
    pub fn observe(
        &mut self,
        state: usize,
        action: usize,
        reward: f64,
        outcome: Outcome,
    ) -> Result<StepRecord, LearnerError> {
        match self.pending.take() {
            Some(p) if p == (state, action) => {}
            expected => {
                return Err(LearnerError::ProtocolViolation {
                    expected,
                    got: (state, action),
                })
            }
        }
        self.t += 1;
        let outcome_idx = outcome.index(self.num_states);
        self.n[state][action] += 1;
        self.n3[state][action][outcome_idx] += 1;
        let visits = self.n[state][action];

        // Empirical backup and variance under the count-based model.
        let mut pv = 0.0;
        let mut pv2 = 0.0;
        for (&count, &val) in self.n3[state][action].iter().zip(&self.v) {
            if count > 0 {
                let p = count as f64 / visits as f64;
                pv += p * val;
                pv2 += p * val * val;
            }
        }
        let var = (pv2 - pv * pv).max(0.0);

        let sa = self.num_states * self.num_actions;
        let (bonus_t, iota_t, q_new) = match self.cfg.mode {
            Mode::SpFixedB => {
                let io = iota(sa, self.cfg.delta, self.cfg.b_init, visits);
                let bo = bonus(var, visits, self.cfg.b_init, io, self.cfg.c1, self.cfg.c2);
                let q_new = (reward + pv + bo).min(self.q[state][action]);
                (bo, io, q_new)
            }
            Mode::SspAdaptive => {
                let mut doublings = 0;
                loop {
                    let io = iota(sa, self.cfg.delta, self.b_cur, visits);
                    let bo = bonus(var, visits, self.b_cur, io, self.cfg.c1, self.cfg.c2);
                    let q_tmp = (reward + pv + bo).min(self.q[state][action]);
                    if q_tmp.abs() <= self.b_cur {
                        break (bo, io, q_tmp);
                    }
                    self.b_cur *= 2.0;
                    doublings += 1;
                    if doublings > MAX_DOUBLINGS_PER_STEP {
                        return Err(LearnerError::DoublingCapExceeded { step: self.t });
                    }
                }
            }
        };
        self.q[state][action] = q_new;
        self.v[state] = self.q[state]
            .iter()
            .fold(f64::NEG_INFINITY, |m, &q| m.max(q));

        // every step of episode n reports k = n (1-based)
        let episode_index = self.k + 1;
        let episode_ended = outcome.is_goal();
        if episode_ended {
            self.k += 1;
        }
        Ok(StepRecord {
            t: self.t,
            k: episode_index,
            state,
            action,
            reward,
            outcome,
            bonus: bonus_t,
            iota: iota_t,
            b_cur: self.b_cur,
            q_committed: q_new,
            episode_ended,
        })
    }

    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q[s][a]
    }

    pub fn v(&self, s: usize) -> f64 {
        self.v[s]
    }

    pub fn visit_count(&self, s: usize, a: usize) -> u64 {
        self.n[s][a]
    }

    pub fn outcome_count(&self, s: usize, a: usize, outcome_idx: usize) -> u64 {
        self.n3[s][a][outcome_idx]
    }

    pub fn b_cur(&self) -> f64 {
        self.b_cur
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn episodes_finished(&self) -> u64 {
        self.k
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.cfg
    }

    #[cfg(test)]
    pub(crate) fn set_q_for_test(&mut self, s: usize, a: usize, value: f64) {
        self.q[s][a] = value;
    }
}
