//! Hard-instance generators for the lower-bound families, random proper
//! instances for sweeps, and the seeded episode simulator.
//!
//! All randomness is ChaCha8 keyed by an explicit 64-bit seed; generators
//! are pure functions of their parameters plus the seed, and an
//! [`EnvInstance`] replays the identical outcome stream on every rerun.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mdp::{add_virtual_init, TabularSP};
use crate::Outcome;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("bad generator parameters: {0}")]
    BadParams(String),
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("step cap {cap} exceeded")]
    StepCapExceeded { cap: u64 },
    #[error("no episode in progress (environment halted by an earlier step-cap abort)")]
    EpisodeNotStarted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LbFamily {
    GeneralSp,
    RStar,
    SlpAdaptivity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RewardMode {
    Mixed,
    NonNeg,
    NonPos,
}

/// Parameters for the lower-bound instance families. Field relevance is
/// family-specific; the constructors fill sensible defaults for the rest.
#[derive(Clone, Debug)]
pub struct LowerBoundParams {
    pub family: LbFamily,
    pub num_actions: usize,
    /// Goal mass per mixing row (GeneralSp / RStar).
    pub epsilon: f64,
    /// Transition tilt of the good action (GeneralSp / RStar).
    pub gap: f64,
    /// Value scale v >= 2 (SlpAdaptivity).
    pub v: f64,
    /// Claimed-bound constant c (SlpAdaptivity).
    pub c: f64,
    /// Episode-budget scale K (SlpAdaptivity).
    pub episodes: u64,
    pub good_action: Option<usize>,
    /// Copy / leaf count of the tree generalization.
    pub copies: usize,
}

impl LowerBoundParams {
    pub fn general_sp(epsilon: f64, gap: f64, num_actions: usize, good_action: Option<usize>) -> Self {
        Self {
            family: LbFamily::GeneralSp,
            num_actions,
            epsilon,
            gap,
            v: 2.0,
            c: 1.0,
            episodes: 1,
            good_action,
            copies: 1,
        }
    }

    pub fn rstar(epsilon: f64, gap: f64, num_actions: usize, good_action: Option<usize>) -> Self {
        Self {
            family: LbFamily::RStar,
            ..Self::general_sp(epsilon, gap, num_actions, good_action)
        }
    }

    pub fn slp_adaptivity(
        v: f64,
        c: f64,
        episodes: u64,
        num_actions: usize,
        good_action: Option<usize>,
    ) -> Self {
        Self {
            family: LbFamily::SlpAdaptivity,
            num_actions,
            epsilon: 0.1,
            gap: 0.05,
            v,
            c,
            episodes,
            good_action,
            copies: 1,
        }
    }

    pub fn with_copies(mut self, copies: usize) -> Self {
        self.copies = copies;
        self
    }
}

fn check(cond: bool, msg: &str) -> Result<(), GenError> {
    if cond {
        Ok(())
    } else {
        Err(GenError::BadParams(msg.into()))
    }
}

/// The two-state mixed-reward family: r(x,.) = +1, r(y,.) = -1, every
/// mixing row splits (1 - eps) evenly between x and y with eps on the
/// goal, and the good action (when present) tilts the split by `gap`
/// toward x. Copies are joined by a virtual initial state whose actions
/// relay uniformly onto all core states, which realizes the family's
/// random initial state within the deterministic-init protocol.
pub fn gen_general_lb(p: &LowerBoundParams) -> Result<TabularSP, GenError> {
    check(p.family == LbFamily::GeneralSp, "family must be GeneralSp")?;
    check(p.epsilon > 0.0 && p.epsilon <= 0.25, "need epsilon in (0, 1/4]")?;
    check(p.gap > 0.0 && p.gap <= 0.25, "need gap in (0, 1/4]")?;
    check(p.num_actions >= 1, "need at least one action")?;
    check(p.copies >= 1, "need at least one copy")?;
    if let Some(a) = p.good_action {
        check(a < p.num_actions, "good action out of range")?;
    }

    let (eps, gap) = (p.epsilon, p.gap);
    let core_states = 2 * p.copies;
    let a_n = p.num_actions;
    let mut reward = Vec::with_capacity(core_states);
    let mut transition = Vec::with_capacity(core_states);
    for i in 0..p.copies {
        let (x, y) = (2 * i, 2 * i + 1);
        let mut base = vec![0.0; core_states + 1];
        base[x] = (1.0 - eps) / 2.0;
        base[y] = (1.0 - eps) / 2.0;
        base[core_states] = eps;

        let mut x_rows = Vec::with_capacity(a_n);
        for a in 0..a_n {
            if Some(a) == p.good_action {
                let mut row = vec![0.0; core_states + 1];
                row[x] = (1.0 - eps + gap) / 2.0;
                row[y] = (1.0 - eps - gap) / 2.0;
                row[core_states] = eps;
                x_rows.push(row);
            } else {
                x_rows.push(base.clone());
            }
        }
        reward.push(vec![1.0; a_n]);
        transition.push(x_rows);

        reward.push(vec![-1.0; a_n]);
        transition.push(vec![base; a_n]);
    }
    let core = TabularSP::new(0, reward, transition)
        .map_err(|e| GenError::BadParams(e.to_string()))?;
    let rho = vec![1.0 / core_states as f64; core_states];
    add_virtual_init(&core, &rho).map_err(|e| GenError::BadParams(e.to_string()))
}

/// The R*-impossibility family: action A-1 on x exits to the goal with
/// reward 1; the mixing actions tilt toward y unless they are the good
/// action; y pays -1 and mixes evenly. `copies > 1` arranges the copies'
/// x states as a balanced binary tree joined by two extra zero-reward
/// connector actions per state (missing children exit to the goal), with
/// the good action living in the last copy.
pub fn gen_rstar_lb(p: &LowerBoundParams) -> Result<TabularSP, GenError> {
    check(p.family == LbFamily::RStar, "family must be RStar")?;
    check(p.epsilon > 0.0 && p.epsilon <= 0.125, "need epsilon in (0, 1/8]")?;
    check(p.gap > 0.0 && p.gap <= 0.125, "need gap in (0, 1/8]")?;
    check(p.gap * p.gap <= p.epsilon, "need gap^2 <= epsilon")?;
    check(p.num_actions >= 2, "need at least two actions")?;
    check(p.copies >= 1, "need at least one copy")?;
    if let Some(a) = p.good_action {
        // the good action is one of the mixing actions, never the exit
        check(a < p.num_actions - 1, "good action must be a mixing action")?;
    }

    let (eps, gap) = (p.epsilon, p.gap);
    let copies = p.copies;
    let core_a = p.num_actions;
    let a_n = if copies > 1 { core_a + 2 } else { core_a };
    let s_n = 2 * copies;
    let goal = s_n;
    let good_copy = copies - 1;

    let mut reward = vec![Vec::new(); s_n];
    let mut transition = vec![Vec::new(); s_n];
    for i in 0..copies {
        let (x, y) = (2 * i, 2 * i + 1);
        let mut y_row = vec![0.0; s_n + 1];
        y_row[x] = (1.0 - eps) / 2.0;
        y_row[y] = (1.0 - eps) / 2.0;
        y_row[goal] = eps;

        let mut x_rows = Vec::with_capacity(a_n);
        let mut x_rewards = Vec::with_capacity(a_n);
        for a in 0..a_n {
            if a < core_a - 1 {
                let good_here = i == good_copy && Some(a) == p.good_action;
                let tilt = if good_here { gap } else { -gap };
                let mut row = vec![0.0; s_n + 1];
                row[x] = (1.0 - eps + tilt) / 2.0;
                row[y] = (1.0 - eps - tilt) / 2.0;
                row[goal] = eps;
                x_rows.push(row);
                x_rewards.push(1.0);
            } else if a == core_a - 1 {
                let mut row = vec![0.0; s_n + 1];
                row[goal] = 1.0;
                x_rows.push(row);
                x_rewards.push(1.0);
            } else {
                // connector: descend to the left/right child copy, or exit
                // when the child does not exist
                let child = if a == core_a { 2 * i + 1 } else { 2 * i + 2 };
                let mut row = vec![0.0; s_n + 1];
                if child < copies {
                    row[2 * child] = 1.0;
                } else {
                    row[goal] = 1.0;
                }
                x_rows.push(row);
                x_rewards.push(0.0);
            }
        }
        reward[x] = x_rewards;
        transition[x] = x_rows;
        reward[y] = vec![-1.0; a_n];
        transition[y] = vec![y_row; a_n];
    }
    TabularSP::new(0, reward, transition).map_err(|e| GenError::BadParams(e.to_string()))
}

/// The SLP adaptivity-price family: constant reward 1, a special action
/// b (index 0) on x that reaches y with a small probability, and a
/// potentially good action on y that keeps the episode alive for a long
/// stretch. `copies > 1` replaces y by a balanced binary relay tree with
/// `copies` leaves (zero-reward connectors), good action on the last leaf.
pub fn gen_slp_lb(p: &LowerBoundParams) -> Result<TabularSP, GenError> {
    check(p.family == LbFamily::SlpAdaptivity, "family must be SlpAdaptivity")?;
    check(p.v >= 2.0, "need v >= 2")?;
    check(p.c > 0.0, "need c > 0")?;
    check(p.episodes >= 1, "need episodes >= 1")?;
    check(p.num_actions >= 2, "need at least two actions")?;
    check(p.copies >= 1, "need at least one leaf")?;
    if let Some(a) = p.good_action {
        check(a < p.num_actions, "good action out of range")?;
    }

    let a_n = p.num_actions;
    let k = p.episodes as f64;
    let log2 = (p.v * k).ln().powi(2);
    let p_b = (a_n as f64).sqrt() / (p.c * k.sqrt() * log2);
    let q = (a_n as f64).sqrt() / (2.0 * p.c * p.v * k.sqrt() * log2);
    check(p_b <= 1.0, "P(y|x,b) exceeds 1; enlarge c, K, or v")?;
    check(q <= 1.0, "P(g|y,a*) exceeds 1; enlarge c, K, or v")?;

    let leaves = p.copies;
    let tree_nodes = if leaves > 1 { 2 * leaves - 1 } else { 1 };
    let s_n = 1 + tree_nodes;
    let goal = s_n;
    let node_state = |j: usize| 1 + j;
    let is_internal = |j: usize| 2 * j + 1 < tree_nodes;
    let last_leaf = tree_nodes - 1;

    let mut reward = Vec::with_capacity(s_n);
    let mut transition = Vec::with_capacity(s_n);

    // state x
    let mut x_rows = Vec::with_capacity(a_n);
    for a in 0..a_n {
        let mut row = vec![0.0; s_n + 1];
        if a == 0 {
            row[node_state(0)] = p_b;
            row[goal] = 1.0 - p_b;
        } else {
            row[0] = 1.0 - 1.0 / p.v;
            row[goal] = 1.0 / p.v;
        }
        x_rows.push(row);
    }
    reward.push(vec![1.0; a_n]);
    transition.push(x_rows);

    for j in 0..tree_nodes {
        let state = node_state(j);
        let mut rows = Vec::with_capacity(a_n);
        if is_internal(j) {
            for a in 0..a_n {
                let child = if a == 1 { 2 * j + 2 } else { 2 * j + 1 };
                let mut row = vec![0.0; s_n + 1];
                row[node_state(child)] = 1.0;
                rows.push(row);
            }
            reward.push(vec![0.0; a_n]);
        } else {
            for a in 0..a_n {
                let mut row = vec![0.0; s_n + 1];
                if j == last_leaf && Some(a) == p.good_action {
                    row[state] = 1.0 - q;
                    row[goal] = q;
                } else {
                    row[state] = 0.5;
                    row[goal] = 0.5;
                }
                rows.push(row);
            }
            reward.push(vec![1.0; a_n]);
        }
        transition.push(rows);
    }
    TabularSP::new(0, reward, transition).map_err(|e| GenError::BadParams(e.to_string()))
}

/// Random proper instance: every row carries at least `p_goal_min` mass on
/// the goal (so every policy is proper and t_max <= 1/p_goal_min), the rest
/// is Dirichlet(1,..,1) over the states, and rewards are uniform in the
/// sign range of `reward_mode`.
pub fn gen_random_proper(
    num_states: usize,
    num_actions: usize,
    p_goal_min: f64,
    reward_mode: RewardMode,
    seed: u64,
) -> Result<TabularSP, GenError> {
    check(num_states >= 1 && num_actions >= 1, "need S >= 1 and A >= 1")?;
    check(p_goal_min > 0.0 && p_goal_min <= 1.0, "need p_goal_min in (0, 1]")?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let remaining = 1.0 - p_goal_min;
    let mut reward = Vec::with_capacity(num_states);
    let mut transition = Vec::with_capacity(num_states);
    for _ in 0..num_states {
        let mut reward_row = Vec::with_capacity(num_actions);
        let mut rows = Vec::with_capacity(num_actions);
        for _ in 0..num_actions {
            let r = match reward_mode {
                RewardMode::Mixed => rng.gen_range(-1.0..=1.0),
                RewardMode::NonNeg => rng.gen_range(0.0..=1.0),
                RewardMode::NonPos => rng.gen_range(-1.0..=0.0),
            };
            reward_row.push(r);

            // Dirichlet(1,..,1) over states via normalized exponentials
            let weights: Vec<f64> = (0..num_states)
                .map(|_| -(1.0 - rng.gen::<f64>()).ln())
                .collect();
            let total: f64 = weights.iter().sum();
            let mut row: Vec<f64> = weights.iter().map(|w| remaining * w / total).collect();
            row.push(p_goal_min);
            rows.push(row);
        }
        reward.push(reward_row);
        transition.push(rows);
    }
    TabularSP::new(0, reward, transition).map_err(|e| GenError::BadParams(e.to_string()))
}

/// A seeded, replayable episode simulator over a [`TabularSP`].
///
/// Episodes start implicitly: the instance begins at the initial state and
/// returns there right after every goal transition. A step-cap abort halts
/// the instance mid-episode; further steps report `EpisodeNotStarted`.
#[derive(Clone, Debug)]
pub struct EnvInstance {
    mdp: TabularSP,
    seed: u64,
    rng: ChaCha8Rng,
    current_state: usize,
    step_count: u64,
    episode_count: u64,
    step_cap: Option<u64>,
    halted: bool,
}

impl EnvInstance {
    pub fn new(mdp: TabularSP, seed: u64) -> Self {
        let current_state = mdp.init_state();
        Self {
            mdp,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            current_state,
            step_count: 0,
            episode_count: 0,
            step_cap: None,
            halted: false,
        }
    }

    pub fn with_step_cap(mut self, cap: u64) -> Self {
        self.step_cap = Some(cap);
        self
    }

    pub fn mdp(&self) -> &TabularSP {
        &self.mdp
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn current_state(&self) -> usize {
        self.current_state
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn episode_count(&self) -> u64 {
        self.episode_count
    }

    /// Takes `action` in the current state, sampling the outcome from the
    /// transition row. On a goal transition the episode ends and the next
    /// step starts a fresh episode from the initial state.
    pub fn step(&mut self, action: usize) -> Result<(f64, Outcome), EnvError> {
        if self.halted {
            return Err(EnvError::EpisodeNotStarted);
        }
        if let Some(cap) = self.step_cap {
            if self.step_count >= cap {
                self.halted = true;
                return Err(EnvError::StepCapExceeded { cap });
            }
        }
        let s = self.current_state;
        let row = self.mdp.transition_row(s, action);
        let goal = self.mdp.goal();
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        let mut outcome_idx = None;
        for (idx, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                outcome_idx = Some(idx);
                break;
            }
        }
        // rounding leftovers land on the last positive entry
        let outcome_idx = outcome_idx.unwrap_or_else(|| {
            row.iter()
                .rposition(|&p| p > 0.0)
                .expect("transition row has no mass")
        });

        self.step_count += 1;
        let reward = self.mdp.reward(s, action);
        if outcome_idx == goal {
            self.episode_count += 1;
            self.current_state = self.mdp.init_state();
            Ok((reward, Outcome::Goal))
        } else {
            self.current_state = outcome_idx;
            Ok((reward, Outcome::State(outcome_idx)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{solve_optimal, validate};

    #[test]
    fn general_lb_no_good_action() {
        let p = LowerBoundParams::general_sp(0.1, 0.05, 2, None);
        let m = gen_general_lb(&p).unwrap();
        assert_eq!(m.num_states(), 3);
        assert_eq!(m.init_state(), 2);
        assert!(validate(&m).all_proper);
        let sol = solve_optimal(&m, 1e-12, 200_000).unwrap();
        assert!((sol.values[0] - 1.0).abs() < 1e-9);
        assert!((sol.values[1] + 1.0).abs() < 1e-9);
        assert!(sol.values[2].abs() < 1e-9, "virtual init averages +1 and -1");
    }

    #[test]
    fn general_lb_good_action_closed_forms() {
        let p = LowerBoundParams::general_sp(0.1, 0.05, 2, Some(0));
        let m = gen_general_lb(&p).unwrap();
        let sol = solve_optimal(&m, 1e-12, 200_000).unwrap();
        assert!((sol.values[0] - 1.2820512820512822).abs() < 1e-8);
        assert!((sol.values[1] + 0.7692307692307692).abs() < 1e-8);
        assert!((sol.q_values[0][1] - 1.2307692307692308).abs() < 1e-8);
    }

    #[test]
    fn general_lb_copies_share_the_single_copy_value() {
        let one = gen_general_lb(&LowerBoundParams::general_sp(0.1, 0.05, 2, Some(0))).unwrap();
        let two = gen_general_lb(
            &LowerBoundParams::general_sp(0.1, 0.05, 2, Some(0)).with_copies(2),
        )
        .unwrap();
        assert_eq!(two.num_states(), 5);
        let sol1 = solve_optimal(&one, 1e-12, 200_000).unwrap();
        let sol2 = solve_optimal(&two, 1e-12, 200_000).unwrap();
        let init1 = sol1.values[one.init_state()];
        let init2 = sol2.values[two.init_state()];
        assert!((init1 - init2).abs() < 1e-9, "identical copies, same relay value");
        // and the relay value is the mean of the copy state values
        let mean: f64 = sol2.values[..4].iter().sum::<f64>() / 4.0;
        assert!((init2 - mean).abs() < 1e-9);
    }

    #[test]
    fn general_lb_rejects_bad_params() {
        assert!(gen_general_lb(&LowerBoundParams::general_sp(0.3, 0.05, 2, None)).is_err());
        assert!(gen_general_lb(&LowerBoundParams::general_sp(0.1, 0.0, 2, None)).is_err());
        assert!(gen_general_lb(&LowerBoundParams::general_sp(0.1, 0.05, 2, Some(2))).is_err());
        assert!(gen_general_lb(&LowerBoundParams::rstar(0.1, 0.05, 2, None)).is_err());
    }

    #[test]
    fn rstar_lb_good_action_closed_forms() {
        let (eps, gap) = (0.1, 0.05);
        let m = gen_rstar_lb(&LowerBoundParams::rstar(eps, gap, 3, Some(0))).unwrap();
        assert!(validate(&m).all_proper);
        let sol = solve_optimal(&m, 1e-12, 200_000).unwrap();
        let vx = 1.0 + (gap / eps) * (1.0 + eps) / (2.0 - gap);
        let vy = -1.0 + (gap / eps) * (1.0 - eps) / (2.0 - gap);
        assert!((sol.values[0] - vx).abs() < 1e-8);
        assert!((sol.values[1] - vy).abs() < 1e-8);
        assert_eq!(sol.policy.action(0), 0);
    }

    #[test]
    fn rstar_lb_no_good_action_exits() {
        let gap = 0.05;
        let m = gen_rstar_lb(&LowerBoundParams::rstar(0.1, gap, 3, None)).unwrap();
        let sol = solve_optimal(&m, 1e-12, 200_000).unwrap();
        assert!((sol.values[0] - 1.0).abs() < 1e-9);
        assert!((sol.values[1] + 1.0).abs() < 1e-9);
        // the exit action is optimal and the mixing actions trail by gap
        assert_eq!(sol.policy.action(0), 2);
        for a in 0..2 {
            assert!((sol.values[0] - sol.q_values[0][a] - gap).abs() < 1e-9);
        }
    }

    #[test]
    fn rstar_lb_parameter_guard() {
        // gap^2 > epsilon must be rejected
        assert!(gen_rstar_lb(&LowerBoundParams::rstar(0.004, 0.08, 3, None)).is_err());
        assert!(gen_rstar_lb(&LowerBoundParams::rstar(0.2, 0.05, 3, None)).is_err());
        // the exit action cannot be the good action
        assert!(gen_rstar_lb(&LowerBoundParams::rstar(0.1, 0.05, 3, Some(2))).is_err());
    }

    #[test]
    fn rstar_lb_tree_is_proper_and_descends() {
        let p = LowerBoundParams::rstar(0.1, 0.05, 3, Some(0)).with_copies(3);
        let m = gen_rstar_lb(&p).unwrap();
        assert_eq!(m.num_states(), 6);
        assert_eq!(m.num_actions(), 5);
        assert!(validate(&m).all_proper);
        let sol = solve_optimal(&m, 1e-12, 200_000).unwrap();
        // good copy is the last one; the root relays to it for free, so the
        // root's optimal value matches the good copy's x value
        let vx_good = 1.0 + (0.05 / 0.1) * 1.1 / 1.95;
        assert!((sol.values[4] - vx_good).abs() < 1e-8);
        assert!((sol.values[0] - vx_good).abs() < 1e-8);
    }

    #[test]
    fn slp_lb_no_good_action_closed_forms() {
        let p = LowerBoundParams::slp_adaptivity(3.0, 1.0, 10_000, 2, None);
        let m = gen_slp_lb(&p).unwrap();
        assert!(m.is_slp());
        assert!(validate(&m).all_proper);
        let sol = solve_optimal(&m, 1e-12, 500_000).unwrap();
        assert!((sol.values[0] - 3.0).abs() < 1e-8);
        assert!((sol.values[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn slp_lb_good_action_closed_forms() {
        let (v, c, k) = (2.0f64, 1.0f64, 100u64);
        let p = LowerBoundParams::slp_adaptivity(v, c, k, 2, Some(0));
        let m = gen_slp_lb(&p).unwrap();
        let sol = solve_optimal(&m, 1e-12, 2_000_000).unwrap();
        let b_star_expected = 2.0 * c * v * (v * k as f64).ln().powi(2) * (k as f64 / 2.0).sqrt();
        assert!((sol.values[0] - (1.0 + 2.0 * v)).abs() / (1.0 + 2.0 * v) < 1e-6);
        assert!((sol.b_star - b_star_expected).abs() / b_star_expected < 1e-6);
    }

    #[test]
    fn slp_lb_rejects_out_of_range_probabilities() {
        // tiny K and c drive P(y|x,b) over 1
        let p = LowerBoundParams::slp_adaptivity(2.0, 1e-3, 1, 64, None);
        assert!(gen_slp_lb(&p).is_err());
    }

    #[test]
    fn slp_lb_tree_preserves_closed_forms() {
        let (v, c, k) = (2.0f64, 1.0f64, 100u64);
        let p = LowerBoundParams::slp_adaptivity(v, c, k, 2, Some(1)).with_copies(4);
        let m = gen_slp_lb(&p).unwrap();
        assert_eq!(m.num_states(), 8); // x + 7 tree nodes
        assert!(m.is_slp());
        assert!(validate(&m).all_proper);
        let sol = solve_optimal(&m, 1e-12, 2_000_000).unwrap();
        assert!((sol.values[0] - (1.0 + 2.0 * v)).abs() / (1.0 + 2.0 * v) < 1e-6);
    }

    #[test]
    fn random_proper_properties() {
        let m = gen_random_proper(4, 3, 0.25, RewardMode::Mixed, 7).unwrap();
        let rep = validate(&m);
        assert!(rep.simplex_ok && rep.reward_range_ok && rep.all_proper);
        assert_eq!(m, gen_random_proper(4, 3, 0.25, RewardMode::Mixed, 7).unwrap());
        assert_ne!(m, gen_random_proper(4, 3, 0.25, RewardMode::Mixed, 8).unwrap());

        assert!(gen_random_proper(3, 2, 0.5, RewardMode::NonNeg, 1).unwrap().is_slp());
        assert!(gen_random_proper(3, 2, 0.5, RewardMode::NonPos, 1).unwrap().is_ssp());
    }

    #[test]
    fn random_proper_instant_exit() {
        let m = gen_random_proper(2, 2, 1.0, RewardMode::Mixed, 3).unwrap();
        let mut env = EnvInstance::new(m, 5);
        for _ in 0..50 {
            let (_, o) = env.step(0).unwrap();
            assert!(o.is_goal());
        }
        assert_eq!(env.episode_count(), 50);
    }

    #[test]
    fn env_step_replays_identically() {
        let m = gen_random_proper(3, 2, 0.3, RewardMode::Mixed, 11).unwrap();
        let run = |seed| {
            let mut env = EnvInstance::new(
                gen_random_proper(3, 2, 0.3, RewardMode::Mixed, 11).unwrap(),
                seed,
            );
            (0..200)
                .map(|i| env.step(i % 2).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
        drop(m);
    }

    #[test]
    fn env_step_cap_halts() {
        let m = gen_random_proper(2, 2, 0.5, RewardMode::Mixed, 1).unwrap();
        let mut env = EnvInstance::new(m, 9).with_step_cap(3);
        for _ in 0..3 {
            env.step(0).unwrap();
        }
        assert!(matches!(env.step(0), Err(EnvError::StepCapExceeded { cap: 3 })));
        assert!(matches!(env.step(0), Err(EnvError::EpisodeNotStarted)));
    }

    #[test]
    fn episode_lengths_match_geometric_mean() {
        // p = 0.25 exit chain: mean episode length 4, sd sqrt(12)
        let m = TabularSP::new(0, vec![vec![1.0]], vec![vec![vec![0.75, 0.25]]]).unwrap();
        let mut env = EnvInstance::new(m, 123);
        let episodes = 100_000u64;
        let mut lengths = Vec::with_capacity(episodes as usize);
        let mut cur = 0u64;
        while (lengths.len() as u64) < episodes {
            let (_, o) = env.step(0).unwrap();
            cur += 1;
            if o.is_goal() {
                lengths.push(cur as f64);
                cur = 0;
            }
        }
        let mean: f64 = lengths.iter().sum::<f64>() / episodes as f64;
        let var: f64 =
            lengths.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / episodes as f64;
        let stderr = (var / episodes as f64).sqrt();
        assert!(
            (mean - 4.0).abs() <= 4.0 * stderr,
            "mean {mean} vs 4.0 (stderr {stderr})"
        );
    }
}
