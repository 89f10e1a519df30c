//! Group-relative policy optimisation: advantages, importance ratios and the
//! clipped surrogate objective with its gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{Adam, Decoding, Policy};
use crate::reward::RewardBreakdown;

pub const RATIO_MIN: f64 = 1e-8;
pub const RATIO_MAX: f64 = 1e8;
const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip_epsilon: f64,
    pub learning_rate: f64,
    pub temperature: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            group_size: 8,
            clip_epsilon: 0.2,
            learning_rate: 1e-3,
            temperature: 1.0,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::Config(format!(
                "group_size must be at least 2, got {}",
                self.group_size
            )));
        }
        for (name, v) in [
            ("clip_epsilon", self.clip_epsilon),
            ("learning_rate", self.learning_rate),
            ("temperature", self.temperature),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// One sampled response. `ids` holds the full decoded sequence including any
/// forced prefix; only positions from `gen_start` count towards the
/// log-probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledResponse {
    pub ids: Vec<u32>,
    pub gen_start: usize,
    pub tokens: Vec<String>,
    pub logprob_old: f64,
    pub logprob_new: f64,
    pub reward: RewardBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRollout {
    pub prompt_id: String,
    pub prompt: Vec<u32>,
    pub responses: Vec<SampledResponse>,
    pub advantages: Vec<f64>,
}

impl GroupRollout {
    /// Builds a group and normalises its rewards into advantages.
    pub fn new(
        prompt_id: String,
        prompt: Vec<u32>,
        responses: Vec<SampledResponse>,
    ) -> Result<Self> {
        let rewards: Vec<f64> = responses.iter().map(|r| r.reward.r_total).collect();
        let advantages = compute_advantages(&rewards)?;
        Ok(GroupRollout {
            prompt_id,
            prompt,
            responses,
            advantages,
        })
    }

    pub fn is_degenerate(&self) -> bool {
        self.advantages.iter().all(|a| *a == 0.0)
    }
}

/// `(r - mean) / std` with the population standard deviation; all zeros
/// when the rewards are (numerically) constant.
pub fn compute_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a group needs at least 2 rewards, got {}",
            rewards.len()
        )));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("reward".into()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < STD_FLOOR {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

pub fn importance_ratio(logprob_new: f64, logprob_old: f64) -> Result<f64> {
    if !logprob_new.is_finite() || !logprob_old.is_finite() {
        return Err(Error::NonFinite(format!(
            "log-probabilities {logprob_new}, {logprob_old}"
        )));
    }
    Ok((logprob_new - logprob_old)
        .exp()
        .clamp(RATIO_MIN, RATIO_MAX))
}

/// `min(rho * adv, clip(rho, 1 - eps, 1 + eps) * adv)`.
pub fn clipped_term(rho: f64, adv: f64, eps: f64) -> f64 {
    (rho * adv).min(rho.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Derivative of [`clipped_term`] with respect to `log rho`. Zero when the
/// clipped branch is selected with `rho` outside the trust region, or when
/// the ratio clamp is active.
fn clipped_term_dlog(rho: f64, adv: f64, eps: f64) -> f64 {
    if rho <= RATIO_MIN || rho >= RATIO_MAX {
        return 0.0;
    }
    let inside = (1.0 - eps..=1.0 + eps).contains(&rho);
    if inside || rho * adv <= rho.clamp(1.0 - eps, 1.0 + eps) * adv {
        rho * adv
    } else {
        0.0
    }
}

/// Per-group objective `(1/G) sum_i min(rho_i A_i, clip(rho_i) A_i)`, to be
/// maximised. Ratios use the stored `logprob_new`.
pub fn surrogate_objective(group: &GroupRollout, eps: f64) -> Result<f64> {
    let mut total = 0.0;
    for (r, &a) in group.responses.iter().zip(&group.advantages) {
        total += clipped_term(importance_ratio(r.logprob_new, r.logprob_old)?, a, eps);
    }
    Ok(total / group.responses.len() as f64)
}

/// Statistics of one policy-gradient step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrpoStats {
    pub step: usize,
    pub objective: f64,
    pub mean_reward: f64,
    pub mean_r_fin: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    /// Groups in the batch whose advantages were all zero.
    pub degenerate_groups: usize,
}

/// Batch objective (mean over groups) under the current parameters and its
/// gradient. Refreshes every response's `logprob_new`.
pub fn surrogate_grad(
    policy: &Policy,
    batch: &mut [GroupRollout],
    eps: f64,
) -> Result<(f64, Vec<f64>, f64)> {
    let n_groups = batch.len() as f64;
    let mut grad = vec![0.0; policy.params().len()];
    let mut objective = 0.0;
    let (mut clipped, mut total) = (0usize, 0usize);
    for group in batch.iter_mut() {
        let g = group.responses.len() as f64;
        for r in group.responses.iter_mut() {
            let w = position_weights(r, 1.0);
            r.logprob_new = policy.weighted_logprob(&group.prompt, &r.ids, &w);
        }
        objective += surrogate_objective(group, eps)? / n_groups;
        for (r, &a) in group.responses.iter().zip(&group.advantages) {
            total += 1;
            let rho = importance_ratio(r.logprob_new, r.logprob_old)?;
            if !(1.0 - eps..=1.0 + eps).contains(&rho) {
                clipped += 1;
            }
            let coef = clipped_term_dlog(rho, a, eps) / (g * n_groups);
            if coef != 0.0 {
                let w = position_weights(r, coef);
                policy.weighted_logprob_grad(&group.prompt, &r.ids, &w, &mut grad);
            }
        }
    }
    let clip_fraction = if total == 0 {
        0.0
    } else {
        clipped as f64 / total as f64
    };
    Ok((objective, grad, clip_fraction))
}

fn position_weights(r: &SampledResponse, w: f64) -> Vec<f64> {
    let mut weights = vec![w; r.ids.len()];
    weights[..r.gen_start].iter_mut().for_each(|x| *x = 0.0);
    weights
}

/// One ascent step on the batch surrogate. An all-zero gradient leaves the
/// parameters and optimiser state untouched.
pub fn grpo_step(
    policy: &mut Policy,
    optimizer: &mut Adam,
    batch: &mut [GroupRollout],
    cfg: &GrpoConfig,
    step: usize,
) -> Result<GrpoStats> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty rollout batch".into()));
    }
    let (objective, grad, clip_fraction) = surrogate_grad(policy, batch, cfg.clip_epsilon)?;
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if !grad_norm.is_finite() || !objective.is_finite() {
        return Err(Error::NonFinite(format!(
            "surrogate gradient at step {step}"
        )));
    }
    if grad_norm > 0.0 {
        let descent: Vec<f64> = grad.iter().map(|g| -g).collect();
        optimizer.step(policy.params_mut(), &descent);
    }
    let responses: Vec<&SampledResponse> = batch.iter().flat_map(|g| &g.responses).collect();
    let n = responses.len() as f64;
    Ok(GrpoStats {
        step,
        objective,
        mean_reward: responses.iter().map(|r| r.reward.r_total).sum::<f64>() / n,
        mean_r_fin: responses.iter().map(|r| r.reward.r_fin).sum::<f64>() / n,
        clip_fraction,
        grad_norm,
        degenerate_groups: batch.iter().filter(|g| g.is_degenerate()).count(),
    })
}

/// Samples `cfg.group_size` responses from a frozen policy snapshot and
/// scores them. Response `i` uses seed `seed_base + i`.
#[allow(clippy::too_many_arguments)]
pub fn sample_group<F>(
    snapshot: &Policy,
    prompt_id: &str,
    prompt: &[u32],
    forced_prefix: &[u32],
    max_len: usize,
    cfg: &GrpoConfig,
    seed_base: u64,
    score: F,
) -> Result<GroupRollout>
where
    F: Fn(&[String]) -> RewardBreakdown,
{
    let decoding = Decoding::Sample {
        temperature: cfg.temperature,
    };
    let mut responses = Vec::with_capacity(cfg.group_size);
    for i in 0..cfg.group_size {
        let s = snapshot.sample_ids(
            prompt,
            forced_prefix,
            max_len,
            decoding,
            seed_base.wrapping_add(i as u64),
        );
        let mut ids = forced_prefix.to_vec();
        ids.extend(&s.ids);
        let tokens = snapshot.vocab().decode(&ids);
        let reward = score(&tokens);
        responses.push(SampledResponse {
            gen_start: forced_prefix.len(),
            tokens,
            logprob_old: s.logprob,
            logprob_new: s.logprob,
            reward,
            ids,
        });
    }
    GroupRollout::new(prompt_id.to_string(), prompt.to_vec(), responses)
}
