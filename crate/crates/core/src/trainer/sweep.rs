use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{evaluate, run_stage3, RunConfig};
use crate::error::{Error, Result};
use crate::metrics::HashEmbedder;
use crate::policy::Checkpoint;
use crate::reward::RewardWeights;
use crate::schema::MemeRecord;

/// Final-judgement weights 0.2..=1.0 with the rest split 3:5 between the
/// caption and subcategory terms.
pub fn gamma_grid() -> Vec<RewardWeights> {
    [0.2, 0.4, 0.6, 0.8, 1.0]
        .into_iter()
        .map(|g| RewardWeights::from_gamma(g, 3.0, 5.0).expect("valid grid point"))
        .collect()
}

/// Caption/subcategory splits of 0.4 at `gamma = 0.6`.
pub fn alpha_beta_grid() -> Vec<RewardWeights> {
    [(1.0, 7.0), (3.0, 5.0), (1.0, 1.0), (5.0, 3.0), (7.0, 1.0)]
        .into_iter()
        .map(|(a, b)| RewardWeights::from_gamma(0.6, a, b).expect("valid grid point"))
        .collect()
}

/// One grid point of a reward-weight sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub macro_f1: f64,
    pub patience_warnings: usize,
}

/// Runs stage 3 from the same stage-2 checkpoint and seed for every grid
/// point and evaluates the result on `test`.
pub fn sweep_reward_weights(
    cfg: &RunConfig,
    start: &Checkpoint,
    train: &[MemeRecord],
    test: &[MemeRecord],
    grid: &[RewardWeights],
) -> Result<Vec<SweepRow>> {
    for w in grid {
        w.validate()?;
    }
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty sweep grid".into()));
    }
    let embedder = HashEmbedder::default();
    grid.iter()
        .map(|w| {
            let mut point = cfg.clone();
            point.reward.set_weights(*w);
            let mut policy = start.clone().into_policy()?;
            let outcome = run_stage3(&point, &mut policy, start.stage, train, false)?;
            let rep = evaluate(&policy, test, &point, &embedder)?.classification;
            Ok(SweepRow {
                seed: cfg.seed,
                alpha: w.alpha,
                beta: w.beta,
                gamma: w.gamma,
                accuracy: rep.accuracy,
                precision: rep.precision,
                recall: rep.recall,
                f1: rep.f1,
                macro_f1: rep.macro_f1,
                patience_warnings: outcome.warnings.len(),
            })
        })
        .collect()
}

/// Plot-ready CSV, one row per grid point, metrics to 4 decimals.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    writeln!(
        w,
        "seed,alpha,beta,gamma,accuracy,precision,recall,f1,macro_f1,patience_warnings"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{}",
            r.seed,
            r.alpha,
            r.beta,
            r.gamma,
            r.accuracy,
            r.precision,
            r.recall,
            r.f1,
            r.macro_f1,
            r.patience_warnings
        )?;
    }
    w.flush()?;
    Ok(())
}
