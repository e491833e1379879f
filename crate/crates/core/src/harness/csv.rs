//! CSV formats for traces and sweeps. Floats are written with 17
//! significant digits so parsing recovers the exact double; the run
//! configuration rides along as a JSON comment line prefixed `#`.

use serde::{Deserialize, Serialize};

use super::{EpisodeRecord, HarnessError, RegretTrace, SweepPoint, SweepResult};

pub const TRACE_HEADER: &str = "k,episode_reward,episode_steps,cumulative_regret,B_cur";
pub const SWEEP_HEADER: &str = "K,seed,final_regret,total_steps";

/// 17 significant digits: enough to reproduce any finite f64 bit-exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(field: &str, line: usize) -> Result<f64, HarnessError> {
    field
        .parse()
        .map_err(|e| HarnessError::Parse(format!("line {line}: bad float {field:?}: {e}")))
}

fn parse_u64(field: &str, line: usize) -> Result<u64, HarnessError> {
    field
        .parse()
        .map_err(|e| HarnessError::Parse(format!("line {line}: bad integer {field:?}: {e}")))
}

#[derive(Serialize, Deserialize)]
struct TraceMeta {
    seed: u64,
    algo_id: String,
    config_json: String,
    v_star_signed: f64,
    v_star: f64,
    b_star: f64,
    k_total: u64,
    t_total: u64,
    final_regret: f64,
    estimation_episodes: u64,
    degraded: bool,
}

pub fn write_trace_csv(trace: &RegretTrace) -> String {
    let meta = TraceMeta {
        seed: trace.seed,
        algo_id: trace.algo_id.clone(),
        config_json: trace.config_json.clone(),
        v_star_signed: trace.v_star_signed,
        v_star: trace.v_star,
        b_star: trace.b_star,
        k_total: trace.k_total,
        t_total: trace.t_total,
        final_regret: trace.final_regret,
        estimation_episodes: trace.estimation_episodes,
        degraded: trace.degraded,
    };
    let mut out = String::new();
    out.push_str("# ");
    out.push_str(&serde_json::to_string(&meta).expect("meta serialization cannot fail"));
    out.push('\n');
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for rec in &trace.episodes {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            rec.k,
            fmt_f64(rec.episode_reward),
            rec.episode_steps,
            fmt_f64(rec.cumulative_regret),
            fmt_f64(rec.b_cur),
        ));
    }
    out
}

pub fn parse_trace_csv(text: &str) -> Result<RegretTrace, HarnessError> {
    let mut lines = text.lines().enumerate();
    let (_, meta_line) = lines
        .next()
        .ok_or_else(|| HarnessError::Parse("empty trace".into()))?;
    let meta_json = meta_line
        .strip_prefix("# ")
        .ok_or_else(|| HarnessError::Parse("missing '# ' config line".into()))?;
    let meta: TraceMeta = serde_json::from_str(meta_json)
        .map_err(|e| HarnessError::Parse(format!("config line: {e}")))?;
    let (_, header) = lines
        .next()
        .ok_or_else(|| HarnessError::Parse("missing header".into()))?;
    if header != TRACE_HEADER {
        return Err(HarnessError::Parse(format!(
            "unexpected header {header:?}, expected {TRACE_HEADER:?}"
        )));
    }
    let mut episodes = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(HarnessError::Parse(format!(
                "line {}: expected 5 fields, got {}",
                idx + 1,
                fields.len()
            )));
        }
        episodes.push(EpisodeRecord {
            k: parse_u64(fields[0], idx + 1)?,
            episode_reward: parse_f64(fields[1], idx + 1)?,
            episode_steps: parse_u64(fields[2], idx + 1)?,
            cumulative_regret: parse_f64(fields[3], idx + 1)?,
            b_cur: parse_f64(fields[4], idx + 1)?,
        });
    }
    Ok(RegretTrace {
        episodes,
        k_total: meta.k_total,
        t_total: meta.t_total,
        final_regret: meta.final_regret,
        seed: meta.seed,
        algo_id: meta.algo_id,
        config_json: meta.config_json,
        v_star_signed: meta.v_star_signed,
        v_star: meta.v_star,
        b_star: meta.b_star,
        estimation_episodes: meta.estimation_episodes,
        degraded: meta.degraded,
    })
}

pub fn write_sweep_csv(sweep: &SweepResult, config_json: &str) -> String {
    let mut out = String::new();
    out.push_str("# ");
    out.push_str(config_json);
    out.push('\n');
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for p in &sweep.points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.episodes,
            p.seed,
            fmt_f64(p.final_regret),
            p.total_steps,
        ));
    }
    out
}

/// Re-reads a sweep CSV. Per-K summaries and the scaling fit are
/// recomputed from the points with the same deterministic fold the sweep
/// runner uses, so a written result re-parses to an equal value.
pub fn parse_sweep_csv(text: &str) -> Result<(SweepResult, String), HarnessError> {
    let mut lines = text.lines().enumerate();
    let (_, meta_line) = lines
        .next()
        .ok_or_else(|| HarnessError::Parse("empty sweep".into()))?;
    let config_json = meta_line
        .strip_prefix("# ")
        .ok_or_else(|| HarnessError::Parse("missing '# ' config line".into()))?
        .to_string();
    let (_, header) = lines
        .next()
        .ok_or_else(|| HarnessError::Parse("missing header".into()))?;
    if header != SWEEP_HEADER {
        return Err(HarnessError::Parse(format!(
            "unexpected header {header:?}, expected {SWEEP_HEADER:?}"
        )));
    }
    let mut points = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(HarnessError::Parse(format!(
                "line {}: expected 4 fields, got {}",
                idx + 1,
                fields.len()
            )));
        }
        points.push(SweepPoint {
            episodes: parse_u64(fields[0], idx + 1)?,
            seed: parse_u64(fields[1], idx + 1)?,
            final_regret: parse_f64(fields[2], idx + 1)?,
            total_steps: parse_u64(fields[3], idx + 1)?,
        });
    }
    let mut ks: Vec<u64> = points.iter().map(|p| p.episodes).collect();
    ks.sort_unstable();
    ks.dedup();
    let per_k = super::summarize(&points, &ks);
    let fit = super::fit_scaling_from_means(&per_k).ok();
    Ok((SweepResult { points, per_k, fit }, config_json))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_f64_round_trips_awkward_values() {
        for x in [
            0.1,
            1.0 / 3.0,
            -1.2820512820512822,
            1e-300,
            -4.0,
            6.02e23,
            f64::MIN_POSITIVE,
        ] {
            let parsed: f64 = fmt_f64(x).parse().unwrap();
            assert_eq!(parsed.to_bits(), x.to_bits(), "{x} mangled by fmt17");
        }
    }

    #[test]
    fn trace_round_trip_identity() {
        let trace = RegretTrace {
            episodes: vec![
                EpisodeRecord {
                    k: 1,
                    episode_reward: 0.1,
                    episode_steps: 3,
                    cumulative_regret: 1.0 / 3.0,
                    b_cur: 2.0,
                },
                EpisodeRecord {
                    k: 2,
                    episode_reward: -0.25,
                    episode_steps: 1,
                    cumulative_regret: 0.9583333333333334,
                    b_cur: 4.0,
                },
            ],
            k_total: 2,
            t_total: 4,
            final_regret: 0.9583333333333334,
            seed: 7,
            algo_id: "vi_ssp".into(),
            config_json: r#"{"algo":"vi_ssp","K":2}"#.into(),
            v_star_signed: -0.21666666,
            v_star: 0.21666666,
            b_star: 1.5,
            estimation_episodes: 0,
            degraded: false,
        };
        let text = write_trace_csv(&trace);
        assert!(text.starts_with("# {"));
        assert_eq!(text.lines().nth(1), Some(TRACE_HEADER));
        let parsed = parse_trace_csv(&text).unwrap();
        assert_eq!(parsed, trace);
    }

    #[test]
    fn sweep_round_trip_identity() {
        let points = vec![
            SweepPoint {
                episodes: 128,
                seed: 0,
                final_regret: 3.5,
                total_steps: 400,
            },
            SweepPoint {
                episodes: 128,
                seed: 1,
                final_regret: 0.1,
                total_steps: 390,
            },
            SweepPoint {
                episodes: 256,
                seed: 0,
                final_regret: 5.25,
                total_steps: 801,
            },
        ];
        let ks = [128u64, 256];
        let per_k = super::super::summarize(&points, &ks);
        let fit = super::super::fit_scaling_from_means(&per_k).ok();
        let sweep = SweepResult { points, per_k, fit };
        let text = write_sweep_csv(&sweep, r#"{"algo":"vi_sp"}"#);
        let (parsed, config) = parse_sweep_csv(&text).unwrap();
        assert_eq!(parsed, sweep);
        assert_eq!(config, r#"{"algo":"vi_sp"}"#);
    }

    #[test]
    fn parse_rejects_malformed_input() {
        assert!(parse_trace_csv("").is_err());
        assert!(parse_trace_csv("k,episode_reward\n").is_err());
        let text = "# {\"seed\":0,\"algo_id\":\"x\",\"config_json\":\"{}\",\
                    \"v_star_signed\":0.0,\"v_star\":0.0,\"b_star\":0.0,\"k_total\":0,\
                    \"t_total\":0,\"final_regret\":0.0,\"estimation_episodes\":0,\
                    \"degraded\":false}\nwrong,header\n";
        assert!(parse_trace_csv(text).is_err());
    }
}
