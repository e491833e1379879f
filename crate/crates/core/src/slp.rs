//! Scale adaptation for stochastic longest paths: the doubling procedure
//! that estimates the optimal initial value from phase averages, and the
//! wrapper that feeds the estimate into the fixed-scale learner for the
//! remaining episodes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, EnvInstance};
use crate::harness::{EpisodeRecord, RegretTrace};
use crate::learner::{
    Learner, LearnerConfig, LearnerError, StepRecord, DEFAULT_C1, DEFAULT_C2, DEFAULT_DELTA,
};
use crate::mdp::{solve_optimal, SolveError, DEFAULT_MAX_ITER, DEFAULT_TOL};

#[derive(Debug, Error)]
pub enum SlpError {
    #[error("environment is not an SLP (found a negative reward)")]
    NotSlp,
    #[error("bad estimator config: {0}")]
    BadConfig(String),
    #[error(
        "episode budget {budget} exhausted after {completed_phases} completed phases \
         ({episodes_used} episodes used)"
    )]
    BudgetExceeded {
        budget: u64,
        completed_phases: usize,
        episodes_used: u64,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Parameters of the estimation procedure. `c_upper` stands in for the
/// universal constant of the fixed-scale regret bound that the stopping
/// rule references; the estimation guarantee assumes the true constant,
/// so this is a desk-scale knob, default 1.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub zeta: f64,
    pub u: f64,
    pub delta: f64,
    pub c_upper: f64,
    pub c1: f64,
    pub c2: f64,
}

impl EstimatorConfig {
    pub fn new(zeta: f64, u: f64) -> Self {
        Self {
            zeta,
            u,
            delta: DEFAULT_DELTA,
            c_upper: 1.0,
            c1: DEFAULT_C1,
            c2: DEFAULT_C2,
        }
    }

    pub fn validate(&self) -> Result<(), SlpError> {
        if !self.zeta.is_finite() || self.zeta < 1.0 {
            return Err(SlpError::BadConfig(format!("zeta = {} must be >= 1", self.zeta)));
        }
        if !self.u.is_finite() || self.u <= 1.0 {
            return Err(SlpError::BadConfig(format!("U = {} must be > 1", self.u)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(SlpError::BadConfig("delta must lie in (0,1)".into()));
        }
        if !self.c_upper.is_finite() || self.c_upper <= 0.0 {
            return Err(SlpError::BadConfig("c_upper must be positive".into()));
        }
        Ok(())
    }
}

/// Aggregated confidence term
/// `(ln(SA/delta) + ln ln(B T)) * ln T`, clamped like `iota` so T = 1 and
/// small B T stay finite and nonnegative.
pub fn tilde_iota(total_steps: u64, b: f64, delta: f64, sa: usize) -> f64 {
    let t = total_steps as f64;
    let inner = (sa as f64 / delta).ln() + (b * t).ln().max(1.0).ln();
    inner * t.ln().max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZetaVariant {
    S2,
    S3,
}

/// The parameter-free presets: `sqrt(K / (S^2 A ln U))` or the S^3
/// variant, floored at 1 so the result is always a valid zeta.
pub fn preset_zeta(episodes: u64, s: usize, a: usize, u: f64, variant: ZetaVariant) -> f64 {
    let s_pow = match variant {
        ZetaVariant::S2 => (s * s) as f64,
        ZetaVariant::S3 => (s * s * s) as f64,
    };
    (episodes as f64 / (s_pow * a as f64 * u.ln())).sqrt().max(1.0)
}

/// Phase count of the estimation procedure.
pub fn num_phases(u: f64) -> usize {
    (u.log2().ceil() as usize).max(1)
}

/// One estimation phase: the scale it ran with, its episode and step
/// counts, the recorded average reward, and the per-phase confidence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub phase: usize,
    pub b: f64,
    pub episodes: u64,
    pub steps: u64,
    pub r_hat: f64,
    pub delta_prime: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    /// Twice the best phase average.
    pub v_hat: f64,
    pub r_hat: Vec<f64>,
    pub episodes_used: u64,
    pub steps_used: u64,
    pub phases: Vec<PhaseRecord>,
}

impl EstimatorResult {
    pub fn phase_log_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("phase log serialization cannot fail")
    }
}

pub(crate) struct EstimationEpisode {
    pub reward: f64,
    pub steps: u64,
    pub b: f64,
}

fn require_slp(env: &EnvInstance) -> Result<(), SlpError> {
    if env.mdp().is_slp() {
        Ok(())
    } else {
        Err(SlpError::NotSlp)
    }
}

/// Runs the doubling estimation procedure: for each phase `i` up to
/// `ceil(log2 U)`, a fresh fixed-scale learner with `B = 2^i zeta` and
/// per-phase confidence `delta / ceil(log2 U)` runs whole episodes until
/// the episode count `N` reaches `16 c^2 zeta S^2 A * tilde_iota(M, B, delta')`
/// (re-checked at episode boundaries with the running step count `M`).
/// Returns twice the best phase average plus resource accounting.
pub fn estimate_vstar(
    env: &mut EnvInstance,
    cfg: &EstimatorConfig,
    episode_budget: Option<u64>,
) -> Result<EstimatorResult, SlpError> {
    let mut log = Vec::new();
    let mut noop = |_: &StepRecord| {};
    estimate_vstar_logged(env, cfg, episode_budget, &mut log, &mut noop)
}

pub(crate) fn estimate_vstar_logged(
    env: &mut EnvInstance,
    cfg: &EstimatorConfig,
    episode_budget: Option<u64>,
    episode_log: &mut Vec<EstimationEpisode>,
    sink: &mut dyn FnMut(&StepRecord),
) -> Result<EstimatorResult, SlpError> {
    cfg.validate()?;
    require_slp(env)?;
    let s_n = env.mdp().num_states();
    let a_n = env.mdp().num_actions();
    let phases_total = num_phases(cfg.u);
    let delta_prime = cfg.delta / phases_total as f64;
    let stop_scale = 16.0 * cfg.c_upper * cfg.c_upper * cfg.zeta * (s_n * s_n * a_n) as f64;

    let mut episodes_used = 0u64;
    let mut steps_used = 0u64;
    let mut phases = Vec::with_capacity(phases_total);
    for phase in 1..=phases_total {
        let b = 2f64.powi(phase as i32) * cfg.zeta;
        let learner_cfg = LearnerConfig::sp_fixed(b)
            .with_delta(delta_prime)
            .with_constants(cfg.c1, cfg.c2);
        let mut learner = Learner::new(s_n, a_n, learner_cfg)?;
        let mut phase_episodes = 0u64;
        let mut phase_steps = 0u64;
        let mut phase_reward = 0.0;
        loop {
            if let Some(budget) = episode_budget {
                if episodes_used >= budget {
                    return Err(SlpError::BudgetExceeded {
                        budget,
                        completed_phases: phase - 1,
                        episodes_used,
                    });
                }
            }
            let mut ep_reward = 0.0;
            let mut ep_steps = 0u64;
            loop {
                let s = env.current_state();
                let a = learner.select_action(s);
                let (r, outcome) = env.step(a)?;
                let rec = learner.observe(s, a, r, outcome)?;
                sink(&rec);
                ep_reward += r;
                ep_steps += 1;
                if outcome.is_goal() {
                    break;
                }
            }
            phase_episodes += 1;
            phase_steps += ep_steps;
            phase_reward += ep_reward;
            episodes_used += 1;
            steps_used += ep_steps;
            episode_log.push(EstimationEpisode {
                reward: ep_reward,
                steps: ep_steps,
                b,
            });
            let threshold =
                stop_scale * tilde_iota(phase_steps, b, delta_prime, s_n * a_n);
            if phase_episodes as f64 >= threshold {
                break;
            }
        }
        phases.push(PhaseRecord {
            phase,
            b,
            episodes: phase_episodes,
            steps: phase_steps,
            r_hat: phase_reward / phase_episodes as f64,
            delta_prime,
        });
    }

    let r_hat: Vec<f64> = phases.iter().map(|p| p.r_hat).collect();
    let best = r_hat.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    Ok(EstimatorResult {
        v_hat: 2.0 * best,
        r_hat,
        episodes_used,
        steps_used,
        phases,
    })
}

/// Episodes phase 1 needs at the very least, from the stopping rule
/// evaluated at one step. Used to decide up front whether a K-episode
/// budget can fit any estimation at all.
pub fn min_phase_episodes(cfg: &EstimatorConfig, s: usize, a: usize) -> u64 {
    let delta_prime = cfg.delta / num_phases(cfg.u) as f64;
    let threshold = 16.0
        * cfg.c_upper
        * cfg.c_upper
        * cfg.zeta
        * (s * s * a) as f64
        * tilde_iota(1, 2.0 * cfg.zeta, delta_prime, s * a);
    threshold.ceil() as u64
}

/// The unknown-scale SLP learner: estimate the optimal initial value with
/// the doubling procedure, then run the fixed-scale learner with
/// `B = v_hat * zeta` for the remaining episodes. The returned trace spans
/// all `episodes` episodes; the estimation episodes count toward regret.
///
/// When `episodes` cannot cover even the first estimation phase, the run
/// degrades to a plain fixed-scale learner with `B = zeta` and the trace is
/// flagged `degraded` (no estimation guarantee applies).
pub fn vislp_run(
    env: &mut EnvInstance,
    episodes: u64,
    cfg: &EstimatorConfig,
) -> Result<RegretTrace, SlpError> {
    vislp_run_traced(env, episodes, cfg, None)
}

/// [`vislp_run`] with a per-step sink covering both the estimation phases
/// and the post-estimation learner.
pub fn vislp_run_traced(
    env: &mut EnvInstance,
    episodes: u64,
    cfg: &EstimatorConfig,
    sink: Option<&mut dyn FnMut(&StepRecord)>,
) -> Result<RegretTrace, SlpError> {
    let mut noop = |_: &StepRecord| {};
    let sink: &mut dyn FnMut(&StepRecord) = match sink {
        Some(f) => f,
        None => &mut noop,
    };
    cfg.validate()?;
    require_slp(env)?;
    let s_n = env.mdp().num_states();
    let a_n = env.mdp().num_actions();
    let solved = solve_optimal(env.mdp(), DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let v_init = solved.init_value(env.mdp());

    let config_json = serde_json::json!({
        "algo": "vi_slp",
        "zeta": cfg.zeta,
        "U": cfg.u,
        "delta": cfg.delta,
        "c_upper": cfg.c_upper,
        "c1": cfg.c1,
        "c2": cfg.c2,
        "K": episodes,
    });

    let mut records: Vec<EpisodeRecord> = Vec::with_capacity(episodes as usize);
    let mut cumulative = 0.0;
    let push_episode = |records: &mut Vec<EpisodeRecord>,
                            cumulative: &mut f64,
                            reward: f64,
                            steps: u64,
                            b: f64| {
        *cumulative += v_init - reward;
        records.push(EpisodeRecord {
            k: records.len() as u64 + 1,
            episode_reward: reward,
            episode_steps: steps,
            cumulative_regret: *cumulative,
            b_cur: b,
        });
    };

    let degraded = episodes < min_phase_episodes(cfg, s_n, a_n);
    let mut estimation_episodes = 0u64;
    let (main_b, remaining) = if degraded {
        (cfg.zeta, episodes)
    } else {
        let mut log = Vec::new();
        let estimate = estimate_vstar_logged(env, cfg, Some(episodes), &mut log, &mut *sink)?;
        for entry in &log {
            push_episode(&mut records, &mut cumulative, entry.reward, entry.steps, entry.b);
        }
        estimation_episodes = estimate.episodes_used;
        (
            (estimate.v_hat * cfg.zeta).max(1.0),
            episodes - estimate.episodes_used,
        )
    };

    let learner_cfg = LearnerConfig::sp_fixed(main_b)
        .with_delta(cfg.delta)
        .with_constants(cfg.c1, cfg.c2);
    let mut learner = Learner::new(s_n, a_n, learner_cfg)?;
    for _ in 0..remaining {
        let mut ep_reward = 0.0;
        let mut ep_steps = 0u64;
        loop {
            let s = env.current_state();
            let a = learner.select_action(s);
            let (r, outcome) = env.step(a)?;
            let rec = learner.observe(s, a, r, outcome)?;
            sink(&rec);
            ep_reward += r;
            ep_steps += 1;
            if outcome.is_goal() {
                break;
            }
        }
        push_episode(&mut records, &mut cumulative, ep_reward, ep_steps, main_b);
    }

    let total_steps = records.iter().map(|r| r.episode_steps).sum();
    let final_regret = records.last().map_or(0.0, |r| r.cumulative_regret);
    Ok(RegretTrace {
        episodes: records,
        k_total: episodes,
        t_total: total_steps,
        final_regret,
        seed: env.seed(),
        algo_id: "vi_slp".into(),
        config_json: config_json.to_string(),
        v_star_signed: v_init,
        v_star: solved.v_star,
        b_star: solved.b_star,
        estimation_episodes,
        degraded,
    })
}
