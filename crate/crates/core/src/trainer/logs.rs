//! Per-step CSV telemetry and the stage-3 rollout log.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::{score_response, RunConfig};
use crate::error::{Error, Result};
use crate::grpo::{GroupRollout, GrpoStats};
use crate::metrics::HashEmbedder;
use crate::policy::TrainStats;
use crate::reward::RewardBreakdown;
use crate::schema::MemeRecord;

fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

fn opt4(x: Option<f64>) -> String {
    x.map(fmt4).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("csv: {other:?}")),
    }
}

/// `step,l_cls,l_cot,l_total,grad_norm`; absent components are empty.
pub fn write_sft_log<W: Write>(log: &[TrainStats], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["step", "l_cls", "l_cot", "l_total", "grad_norm"])
        .map_err(csv_err)?;
    for s in log {
        w.write_record([
            s.step.to_string(),
            opt4(s.l_cls),
            opt4(s.l_cot),
            fmt4(s.l_total),
            fmt4(s.grad_norm),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `step,objective,mean_reward,mean_r_fin,clip_fraction,grad_norm`.
pub fn write_grpo_log<W: Write>(log: &[GrpoStats], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "step",
        "objective",
        "mean_reward",
        "mean_r_fin",
        "clip_fraction",
        "grad_norm",
    ])
    .map_err(csv_err)?;
    for s in log {
        w.write_record([
            s.step.to_string(),
            fmt4(s.objective),
            fmt4(s.mean_reward),
            fmt4(s.mean_r_fin),
            fmt4(s.clip_fraction),
            fmt4(s.grad_norm),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroupLog {
    pub prompt_id: String,
    pub responses: Vec<Vec<String>>,
    pub rewards: Vec<RewardBreakdown>,
}

/// Everything sampled and scored in one stage-3 step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutStepLog {
    pub step: usize,
    pub mean_reward: f64,
    pub mean_r_fin: f64,
    pub groups: Vec<RolloutGroupLog>,
}

impl RolloutStepLog {
    pub fn from_groups(step: usize, groups: &[GroupRollout], stats: &GrpoStats) -> Self {
        RolloutStepLog {
            step,
            mean_reward: stats.mean_reward,
            mean_r_fin: stats.mean_r_fin,
            groups: groups
                .iter()
                .map(|g| RolloutGroupLog {
                    prompt_id: g.prompt_id.clone(),
                    responses: g.responses.iter().map(|r| r.tokens.clone()).collect(),
                    rewards: g.responses.iter().map(|r| r.reward).collect(),
                })
                .collect(),
        }
    }
}

pub fn write_rollout_log<W: Write>(log: &[RolloutStepLog], writer: W) -> Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    for step in log {
        serde_json::to_writer(&mut w, step)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rollout_log<R: Read>(reader: R) -> Result<Vec<RolloutStepLog>> {
    let mut out = Vec::new();
    for line in BufReader::new(reader).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Re-scores every logged response against the dataset and recomputes the
/// per-step reward means. Returns the largest absolute discrepancy with the
/// logged values.
pub fn replay_rollout_log(
    log: &[RolloutStepLog],
    dataset: &[MemeRecord],
    cfg: &RunConfig,
) -> Result<f64> {
    let by_id: HashMap<&str, &MemeRecord> = dataset.iter().map(|r| (r.id.as_str(), r)).collect();
    let embedder = HashEmbedder::default();
    let mut worst = 0.0f64;
    for step in log {
        let (mut total, mut fin, mut n) = (0.0, 0.0, 0usize);
        for g in &step.groups {
            let gold = by_id.get(g.prompt_id.as_str()).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "rollout log names unknown record `{}`",
                    g.prompt_id
                ))
            })?;
            for (tokens, logged) in g.responses.iter().zip(&g.rewards) {
                let r = score_response(tokens, gold, cfg, &embedder);
                worst = worst
                    .max((r.r_total - logged.r_total).abs())
                    .max((r.r_fin - logged.r_fin).abs());
                total += r.r_total;
                fin += r.r_fin;
                n += 1;
            }
        }
        if n > 0 {
            worst = worst
                .max((total / n as f64 - step.mean_reward).abs())
                .max((fin / n as f64 - step.mean_r_fin).abs());
        }
    }
    Ok(worst)
}
