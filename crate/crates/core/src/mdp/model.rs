use thiserror::Error;

/// Tolerance for "this transition row sums to one".
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Row mass that may leak outside a candidate trapping set before the state
/// is pruned. Looser than [`SIMPLEX_TOL`] so accumulated rounding in
/// constructed rows cannot flip a properness verdict.
const PRUNE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad model shape: {0}")]
    BadShape(String),
    #[error("bad distribution: {0}")]
    BadDistribution(String),
    #[error("init state {init} out of range (S = {num_states})")]
    BadInit { init: usize, num_states: usize },
}

/// A tabular stochastic-path MDP.
///
/// `transition[s][a]` has length `S + 1`; index `S` is the terminal state g.
/// The struct is immutable after construction and safe to share across
/// threads; every operation on it is pure.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularSP {
    num_states: usize,
    num_actions: usize,
    init_state: usize,
    reward: Vec<Vec<f64>>,
    transition: Vec<Vec<Vec<f64>>>,
}

impl TabularSP {
    /// Builds a model from raw tables, checking shapes only. Numeric
    /// soundness (simplex rows, reward range, properness) is reported by
    /// [`validate`], never enforced here, so that malformed files can still
    /// be loaded and diagnosed.
    pub fn new(
        init_state: usize,
        reward: Vec<Vec<f64>>,
        transition: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self, ModelError> {
        let num_states = reward.len();
        if num_states == 0 {
            return Err(ModelError::BadShape("no states".into()));
        }
        let num_actions = reward[0].len();
        if num_actions == 0 {
            return Err(ModelError::BadShape("no actions".into()));
        }
        if reward.iter().any(|row| row.len() != num_actions) {
            return Err(ModelError::BadShape("ragged reward table".into()));
        }
        if transition.len() != num_states {
            return Err(ModelError::BadShape(format!(
                "transition has {} states, reward has {}",
                transition.len(),
                num_states
            )));
        }
        for (s, per_action) in transition.iter().enumerate() {
            if per_action.len() != num_actions {
                return Err(ModelError::BadShape(format!(
                    "state {s}: {} action rows, expected {num_actions}",
                    per_action.len()
                )));
            }
            if per_action.iter().any(|row| row.len() != num_states + 1) {
                return Err(ModelError::BadShape(format!(
                    "state {s}: transition rows must have length S+1 = {}",
                    num_states + 1
                )));
            }
        }
        if init_state >= num_states {
            return Err(ModelError::BadInit {
                init: init_state,
                num_states,
            });
        }
        Ok(Self {
            num_states,
            num_actions,
            init_state,
            reward,
            transition,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn init_state(&self) -> usize {
        self.init_state
    }

    /// Outcome index of the terminal state g.
    pub fn goal(&self) -> usize {
        self.num_states
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s][a]
    }

    /// Transition row over outcomes `0..=S` (goal last).
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[s][a]
    }

    pub fn reward_table(&self) -> &[Vec<f64>] {
        &self.reward
    }

    pub fn transition_table(&self) -> &[Vec<Vec<f64>>] {
        &self.transition
    }

    /// All rewards >= 0 (stochastic longest path).
    pub fn is_slp(&self) -> bool {
        self.reward.iter().flatten().all(|&r| r >= 0.0)
    }

    /// All rewards <= 0 (stochastic shortest path).
    pub fn is_ssp(&self) -> bool {
        self.reward.iter().flatten().all(|&r| r <= 0.0)
    }
}

/// A stationary deterministic policy: one action per state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Policy {
    pub action_of: Vec<usize>,
}

impl Policy {
    pub fn new(action_of: Vec<usize>) -> Self {
        Self { action_of }
    }

    pub fn action(&self, s: usize) -> usize {
        self.action_of[s]
    }
}

/// Report from [`validate`]. `all_proper` is false iff `trapping_set` is a
/// non-empty witness of a closed sub-MDP avoiding g.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ValidationReport {
    pub simplex_ok: bool,
    pub reward_range_ok: bool,
    pub all_proper: bool,
    pub trapping_set: Option<Vec<usize>>,
}

/// Checks the model invariants and the all-policies-proper assumption.
/// Reports, never errors.
///
/// Properness is decided by iterative pruning: starting from all states,
/// repeatedly keep only states that have some action whose mass stays
/// entirely inside the kept set. The fixed point is the largest set a
/// policy can stay in forever; it is empty iff every stationary
/// deterministic policy reaches g from every state.
pub fn validate(mdp: &TabularSP) -> ValidationReport {
    let s_n = mdp.num_states();
    let a_n = mdp.num_actions();

    let mut simplex_ok = true;
    for s in 0..s_n {
        for a in 0..a_n {
            let row = mdp.transition_row(s, a);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL || row.iter().any(|&p| p < 0.0) {
                simplex_ok = false;
            }
        }
    }

    let reward_range_ok = mdp
        .reward_table()
        .iter()
        .flatten()
        .all(|&r| (-1.0..=1.0).contains(&r));

    // Pruning to the largest trapping set.
    let mut kept = vec![true; s_n];
    loop {
        let mut changed = false;
        for s in 0..s_n {
            if !kept[s] {
                continue;
            }
            let survives = (0..a_n).any(|a| {
                let row = mdp.transition_row(s, a);
                let inside: f64 = (0..s_n).filter(|&sp| kept[sp]).map(|sp| row[sp]).sum();
                inside >= 1.0 - PRUNE_TOL
            });
            if !survives {
                kept[s] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let trapping: Vec<usize> = (0..s_n).filter(|&s| kept[s]).collect();
    let all_proper = trapping.is_empty();

    ValidationReport {
        simplex_ok,
        reward_range_ok,
        all_proper,
        trapping_set: if all_proper { None } else { Some(trapping) },
    }
}

/// Returns a copy with every reward decreased by `1/(K * t_star_bound)`,
/// clamped at -1 so the model stays inside the reward range. Transitions
/// are untouched.
pub fn perturb_rewards(mdp: &TabularSP, episodes: u64, t_star_bound: f64) -> TabularSP {
    assert!(episodes >= 1, "episode count must be >= 1");
    assert!(t_star_bound >= 1.0, "t_star_bound must be >= 1");
    let shift = 1.0 / (episodes as f64 * t_star_bound);
    let mut out = mdp.clone();
    for row in &mut out.reward {
        for r in row.iter_mut() {
            *r = (*r - shift).max(-1.0);
        }
    }
    out
}

/// Appends a virtual initial state whose every action has reward 0 and
/// next-state distribution `rho` over the original states. Original state
/// indices are preserved (the new state takes index S, the goal moves to
/// S+1), so the original states' optimal values are unchanged and the new
/// init value is `sum_s rho(s) V*(s)`.
pub fn add_virtual_init(mdp: &TabularSP, rho: &[f64]) -> Result<TabularSP, ModelError> {
    let s_n = mdp.num_states();
    let a_n = mdp.num_actions();
    if rho.len() != s_n {
        return Err(ModelError::BadDistribution(format!(
            "rho has length {}, expected {s_n}",
            rho.len()
        )));
    }
    if rho.iter().any(|&p| p < 0.0) {
        return Err(ModelError::BadDistribution("negative entry in rho".into()));
    }
    let sum: f64 = rho.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(ModelError::BadDistribution(format!(
            "rho sums to {sum}, expected 1"
        )));
    }

    let mut reward = Vec::with_capacity(s_n + 1);
    let mut transition = Vec::with_capacity(s_n + 1);
    for s in 0..s_n {
        reward.push(mdp.reward[s].clone());
        let mut rows = Vec::with_capacity(a_n);
        for a in 0..a_n {
            let old = &mdp.transition[s][a];
            let mut row = Vec::with_capacity(s_n + 2);
            row.extend_from_slice(&old[..s_n]);
            row.push(0.0); // never transitions to the virtual state
            row.push(old[s_n]); // goal mass moves to the new last index
            rows.push(row);
        }
        transition.push(rows);
    }
    // The virtual state itself.
    reward.push(vec![0.0; a_n]);
    let mut virt_row = Vec::with_capacity(s_n + 2);
    virt_row.extend_from_slice(rho);
    virt_row.push(0.0);
    virt_row.push(0.0);
    transition.push(vec![virt_row; a_n]);

    TabularSP::new(s_n, reward, transition)
}
