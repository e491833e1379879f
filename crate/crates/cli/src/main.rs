//! `pathlab`: generate, solve, and run goal-terminated MDP experiments.
//!
//! Usage errors exit 2 (clap); runtime failures exit 1 after printing a
//! single JSON error line to stderr.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pathlab_core::env::{
    gen_general_lb, gen_random_proper, gen_rstar_lb, gen_slp_lb, LowerBoundParams, RewardMode,
};
use pathlab_core::harness::csv::{write_sweep_csv, write_trace_csv};
use pathlab_core::harness::{
    fit_scaling, optimism_audit, run_experiment, run_sweep, AlgoSpec, RunParams,
};
use pathlab_core::mdp::{
    max_expected_time, read_mdp_file, solve_optimal, validate, write_mdp_file, TabularSP,
};

#[derive(Parser)]
#[command(name = "pathlab", version, about = "Tabular stochastic-path laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check model invariants and the all-policies-proper assumption.
    Validate { mdp: PathBuf },
    /// Solve an MDP exactly and print V_star, B_star, V*(s_init), T_max.
    Solve {
        mdp: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 1_000_000)]
        max_iter: u64,
        /// Emit a JSON object instead of key=value lines.
        #[arg(long)]
        json: bool,
    },
    /// Generate an instance and write it as MDP JSON.
    Gen {
        #[command(subcommand)]
        family: GenFamily,
    },
    /// Run one learner for K episodes and emit the trace CSV.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long = "K")]
        k: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the trace CSV here instead of stdout.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a (K, seed) grid and write the sweep CSV plus a scaling fit.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Comma-separated episode counts, e.g. 128,256,512.
        #[arg(long = "Ks", value_delimiter = ',', required = true)]
        ks: Vec<u64>,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Replay seeded runs and report optimism violations against Q*.
    Audit {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long = "K", default_value_t = 50)]
        k: u64,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgoName {
    ViSp,
    ViSsp,
    ViSlp,
    Oracle,
}

#[derive(Args)]
struct ExperimentArgs {
    /// MDP JSON file describing the environment.
    #[arg(long)]
    env: PathBuf,
    #[arg(long, value_enum)]
    algo: AlgoName,
    /// Scale B for vi-sp; defaults to the exact B_star of the environment.
    #[arg(long)]
    b: Option<f64>,
    #[arg(long, required_if_eq("algo", "vi-slp"))]
    zeta: Option<f64>,
    #[arg(long, required_if_eq("algo", "vi-slp"))]
    u: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 2.0)]
    c1: f64,
    #[arg(long, default_value_t = 8.0)]
    c2: f64,
    /// Stopping-rule constant of the SLP estimator.
    #[arg(long, default_value_t = 1.0)]
    c_upper: f64,
    #[arg(long)]
    step_cap: Option<u64>,
}

#[derive(Subcommand)]
enum GenFamily {
    /// Two-state mixed-reward family joined through a virtual init.
    GeneralLb {
        #[arg(long)]
        epsilon: f64,
        /// Transition tilt of the good action.
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 2)]
        actions: usize,
        #[arg(long, default_value_t = 0)]
        good_action: usize,
        /// Drop the good action (all actions identical).
        #[arg(long)]
        no_good_action: bool,
        #[arg(long, default_value_t = 1)]
        copies: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Two-state family with a deterministic exit action.
    RstarLb {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 3)]
        actions: usize,
        #[arg(long, default_value_t = 0)]
        good_action: usize,
        #[arg(long)]
        no_good_action: bool,
        #[arg(long, default_value_t = 1)]
        copies: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Constant-reward SLP with a rarely-reached long-lived state.
    SlpLb {
        #[arg(long)]
        v: f64,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        /// Episode-budget scale K of the construction.
        #[arg(long = "K")]
        k: u64,
        #[arg(long, default_value_t = 2)]
        actions: usize,
        /// Good action index on the long-lived state (omit for none).
        #[arg(long)]
        good_action: Option<usize>,
        #[arg(long, default_value_t = 1)]
        copies: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Random proper instance with guaranteed goal mass per row.
    Random {
        #[arg(long)]
        states: usize,
        #[arg(long)]
        actions: usize,
        #[arg(long, default_value_t = 0.25)]
        p_goal_min: f64,
        #[arg(long, value_enum, default_value_t = RewardModeArg::Mixed)]
        reward_mode: RewardModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RewardModeArg {
    Mixed,
    Nonneg,
    Nonpos,
}

impl From<RewardModeArg> for RewardMode {
    fn from(value: RewardModeArg) -> Self {
        match value {
            RewardModeArg::Mixed => RewardMode::Mixed,
            RewardModeArg::Nonneg => RewardMode::NonNeg,
            RewardModeArg::Nonpos => RewardMode::NonPos,
        }
    }
}

fn load_env(path: &std::path::Path) -> Result<TabularSP> {
    read_mdp_file(path).with_context(|| format!("loading {}", path.display()))
}

fn resolve_algo(exp: &ExperimentArgs, mdp: &TabularSP) -> Result<AlgoSpec> {
    Ok(match exp.algo {
        AlgoName::ViSp => {
            let b = match exp.b {
                Some(b) => b,
                None => solve_optimal(mdp, 1e-10, 1_000_000)?.b_star,
            };
            AlgoSpec::ViSp { b }
        }
        AlgoName::ViSsp => AlgoSpec::ViSsp,
        AlgoName::ViSlp => AlgoSpec::ViSlp {
            zeta: exp.zeta.expect("clap enforces --zeta for vi-slp"),
            u: exp.u.expect("clap enforces --u for vi-slp"),
        },
        AlgoName::Oracle => AlgoSpec::Oracle,
    })
}

fn run_params(exp: &ExperimentArgs, k: u64, seed: u64) -> RunParams {
    let mut params = RunParams::new(k, seed);
    if let Some(cap) = exp.step_cap {
        params.step_cap = Some(cap);
    }
    params.delta = exp.delta;
    params.c1 = exp.c1;
    params.c2 = exp.c2;
    params.c_upper = exp.c_upper;
    params
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = dispatch(cli) {
        eprintln!("{}", serde_json::json!({ "error": format!("{err:#}") }));
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Validate { mdp } => {
            let model = load_env(&mdp)?;
            let report = validate(&model);
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Cmd::Solve {
            mdp,
            tol,
            max_iter,
            json,
        } => {
            let model = load_env(&mdp)?;
            let sol = solve_optimal(&model, tol, max_iter)?;
            let (_, t_max) = max_expected_time(&model, tol, max_iter)?;
            if json {
                println!(
                    "{}",
                    serde_json::json!({
                        "V_star": sol.v_star,
                        "B_star": sol.b_star,
                        "v_init_signed": sol.init_value(&model),
                        "T_max": t_max,
                        "residual": sol.residual,
                        "iterations": sol.iterations,
                        "values": sol.values,
                        "policy": sol.policy.action_of,
                    })
                );
            } else {
                println!("V_star={}", sol.v_star);
                println!("B_star={}", sol.b_star);
                println!("V_init={}", sol.init_value(&model));
                println!("T_max={t_max}");
                println!("values={}", serde_json::to_string(&sol.values)?);
                println!("policy={}", serde_json::to_string(&sol.policy.action_of)?);
                println!("residual={}", sol.residual);
                println!("iterations={}", sol.iterations);
            }
        }
        Cmd::Gen { family } => {
            let (mdp, out) = build_instance(family)?;
            write_mdp_file(&mdp, &out).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "{}",
                serde_json::json!({
                    "written": out.display().to_string(),
                    "S": mdp.num_states(),
                    "A": mdp.num_actions(),
                })
            );
        }
        Cmd::Run {
            exp,
            k,
            seed,
            trace,
        } => {
            let mdp = load_env(&exp.env)?;
            let algo = resolve_algo(&exp, &mdp)?;
            let result = run_experiment(&mdp, &algo, &run_params(&exp, k, seed))?;
            let text = write_trace_csv(&result);
            match trace {
                Some(path) => {
                    fs::write(&path, &text)
                        .with_context(|| format!("writing {}", path.display()))?;
                    println!(
                        "{}",
                        serde_json::json!({
                            "trace": path.display().to_string(),
                            "K": result.k_total,
                            "T": result.t_total,
                            "final_regret": result.final_regret,
                        })
                    );
                }
                None => print!("{text}"),
            }
        }
        Cmd::Sweep {
            exp,
            ks,
            seeds,
            base_seed,
            out,
        } => {
            if ks.is_empty() {
                bail!("--Ks needs at least one episode count");
            }
            let mdp = load_env(&exp.env)?;
            let algo = resolve_algo(&exp, &mdp)?;
            let base = run_params(&exp, 0, base_seed);
            let sweep = run_sweep(&mdp, &algo, &ks, seeds, &base)?;
            let config = serde_json::json!({
                "env": exp.env.display().to_string(),
                "algo": algo,
                "Ks": ks,
                "seeds": seeds,
                "base_seed": base_seed,
                "delta": exp.delta,
                "c1": exp.c1,
                "c2": exp.c2,
            });
            fs::write(&out, write_sweep_csv(&sweep, &config.to_string()))
                .with_context(|| format!("writing {}", out.display()))?;
            match fit_scaling(&sweep) {
                Ok(fit) => println!(
                    "{}",
                    serde_json::json!({
                        "sweep": out.display().to_string(),
                        "slope": fit.slope,
                        "intercept": fit.intercept,
                        "residual": fit.residual,
                        "skipped_Ks": fit.skipped,
                    })
                ),
                Err(err) => println!(
                    "{}",
                    serde_json::json!({
                        "sweep": out.display().to_string(),
                        "fit": format!("{err}"),
                    })
                ),
            }
        }
        Cmd::Audit {
            exp,
            k,
            seeds,
            tol,
        } => {
            let mdp = load_env(&exp.env)?;
            let algo = resolve_algo(&exp, &mdp)?;
            let base = run_params(&exp, k, 0);
            let audit = optimism_audit(&mdp, &algo, &base, seeds, tol)?;
            println!("{}", serde_json::to_string_pretty(&audit)?);
        }
    }
    Ok(())
}

fn build_instance(family: GenFamily) -> Result<(TabularSP, PathBuf)> {
    Ok(match family {
        GenFamily::GeneralLb {
            epsilon,
            delta,
            actions,
            good_action,
            no_good_action,
            copies,
            out,
        } => {
            let good = if no_good_action { None } else { Some(good_action) };
            let p = LowerBoundParams::general_sp(epsilon, delta, actions, good).with_copies(copies);
            (gen_general_lb(&p)?, out)
        }
        GenFamily::RstarLb {
            epsilon,
            delta,
            actions,
            good_action,
            no_good_action,
            copies,
            out,
        } => {
            let good = if no_good_action { None } else { Some(good_action) };
            let p = LowerBoundParams::rstar(epsilon, delta, actions, good).with_copies(copies);
            (gen_rstar_lb(&p)?, out)
        }
        GenFamily::SlpLb {
            v,
            c,
            k,
            actions,
            good_action,
            copies,
            out,
        } => {
            let p = LowerBoundParams::slp_adaptivity(v, c, k, actions, good_action)
                .with_copies(copies);
            (gen_slp_lb(&p)?, out)
        }
        GenFamily::Random {
            states,
            actions,
            p_goal_min,
            reward_mode,
            seed,
            out,
        } => (
            gen_random_proper(states, actions, p_goal_min, reward_mode.into(), seed)?,
            out,
        ),
    })
}
