use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Adam, Policy};
use crate::error::{Error, Result};

/// One supervised sequence. Positions from `lm_start` onward contribute to
/// the language-modelling loss; `judgement_pos`, when set, indexes the
/// judgement word and contributes to the classification loss.
#[derive(Debug, Clone, PartialEq)]
pub struct SftExample {
    pub prompt: Vec<u32>,
    pub tokens: Vec<u32>,
    pub lm_start: Option<usize>,
    pub judgement_pos: Option<usize>,
}

/// Mini-batch losses. A component is `None` when no example in the batch
/// carries that supervision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SftLosses {
    pub l_cls: Option<f64>,
    pub l_cot: Option<f64>,
    pub l_total: f64,
}

/// One supervised optimiser step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub step: usize,
    pub l_cls: Option<f64>,
    pub l_cot: Option<f64>,
    pub l_total: f64,
    pub grad_norm: f64,
}

impl Policy {
    /// Computes the batch losses and takes one descent step.
    pub fn sft_step(
        &mut self,
        optimizer: &mut Adam,
        batch: &[SftExample],
        step: usize,
    ) -> Result<TrainStats> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty training batch".into()));
        }
        let (losses, grad) = self.sft_loss_grad(batch);
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !losses.l_total.is_finite() || !grad_norm.is_finite() {
            return Err(Error::NonFinite(format!("supervised loss at step {step}")));
        }
        optimizer.step(&mut self.params, &grad);
        Ok(TrainStats {
            step,
            l_cls: losses.l_cls,
            l_cot: losses.l_cot,
            l_total: losses.l_total,
            grad_norm,
        })
    }

    /// `L_total = L_cls + L_cot` over a mini-batch, with `L_cot` the mean
    /// over chain-of-thought examples of their per-token NLL and `L_cls` the
    /// mean NLL of the judgement word. Returns the losses and `dL/dparams`.
    pub fn sft_loss_grad(&self, batch: &[SftExample]) -> (SftLosses, Vec<f64>) {
        let n_cot = batch.iter().filter(|e| e.lm_start.is_some()).count();
        let n_cls = batch.iter().filter(|e| e.judgement_pos.is_some()).count();
        let n = self.params.len();
        let parts: Vec<(f64, f64, Vec<f64>)> = batch
            .par_iter()
            .map(|ex| {
                let mut w = vec![0.0; ex.tokens.len()];
                if let Some(start) = ex.lm_start {
                    let span = ex.tokens.len().saturating_sub(start).max(1) as f64;
                    for x in &mut w[start..] {
                        *x -= 1.0 / (span * n_cot as f64);
                    }
                }
                let mut cls = 0.0;
                if let Some(j) = ex.judgement_pos {
                    let mut wc = vec![0.0; ex.tokens.len()];
                    wc[j] = -1.0 / n_cls as f64;
                    cls = self.weighted_logprob(&ex.prompt, &ex.tokens, &wc);
                    w[j] += wc[j];
                }
                let mut grad = vec![0.0; n];
                let total = self.weighted_logprob_grad(&ex.prompt, &ex.tokens, &w, &mut grad);
                (total, cls, grad)
            })
            .collect();
        let mut grad = vec![0.0; n];
        let (mut total, mut cls) = (0.0, 0.0);
        for (t, c, g) in parts {
            total += t;
            cls += c;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        let losses = SftLosses {
            l_cls: (n_cls > 0).then_some(cls),
            l_cot: (n_cot > 0).then_some(total - cls),
            l_total: total,
        };
        (losses, grad)
    }
}
