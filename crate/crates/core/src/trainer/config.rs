use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grpo::GrpoConfig;
use crate::metrics::SimilarityWeights;
use crate::policy::ModelConfig;
use crate::reward::RewardWeights;
use crate::schema::TEMPLATES;

/// Hyperparameters of a supervised stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftConfig {
    pub enabled: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Overrides `epochs` when set.
    pub steps: Option<usize>,
}

impl SftConfig {
    fn with_epochs(epochs: usize) -> Self {
        SftConfig {
            enabled: true,
            learning_rate: 1e-2,
            batch_size: 16,
            epochs,
            steps: None,
        }
    }

    /// Number of optimiser steps over `n` examples.
    pub fn total_steps(&self, n: usize) -> usize {
        self.steps
            .unwrap_or_else(|| self.epochs * n.div_ceil(self.batch_size.max(1)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoStageConfig {
    pub enabled: bool,
    pub learning_rate: f64,
    /// Prompts per step.
    pub batch_size: usize,
    pub group_size: usize,
    pub clip_epsilon: f64,
    pub temperature: f64,
    pub epochs: usize,
    /// Overrides `epochs` when set.
    pub steps: Option<usize>,
    /// Consecutive zero-advantage rollout groups tolerated before a
    /// reward-sparsity warning.
    pub patience: usize,
}

impl Default for GrpoStageConfig {
    fn default() -> Self {
        let g = GrpoConfig::default();
        GrpoStageConfig {
            enabled: true,
            learning_rate: 2e-3,
            batch_size: 8,
            group_size: g.group_size,
            clip_epsilon: g.clip_epsilon,
            temperature: g.temperature,
            epochs: 1,
            steps: Some(2000),
            patience: 20,
        }
    }
}

impl GrpoStageConfig {
    pub fn grpo(&self) -> GrpoConfig {
        GrpoConfig {
            group_size: self.group_size,
            clip_epsilon: self.clip_epsilon,
            learning_rate: self.learning_rate,
            temperature: self.temperature,
        }
    }

    pub fn total_steps(&self, n: usize) -> usize {
        self.steps
            .unwrap_or_else(|| self.epochs * n.div_ceil(self.batch_size.max(1)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub similarity_weights: [f64; 3],
}

impl Default for RewardConfig {
    fn default() -> Self {
        let w = RewardWeights::default();
        RewardConfig {
            alpha: w.alpha,
            beta: w.beta,
            gamma: w.gamma,
            similarity_weights: SimilarityWeights::default().0,
        }
    }
}

impl RewardConfig {
    pub fn weights(&self) -> RewardWeights {
        RewardWeights {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
        }
    }

    pub fn set_weights(&mut self, w: RewardWeights) {
        self.alpha = w.alpha;
        self.beta = w.beta;
        self.gamma = w.gamma;
    }

    pub fn similarity(&self) -> SimilarityWeights {
        SimilarityWeights(self.similarity_weights)
    }
}

/// Full pipeline configuration, read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Stage 2 supervises only the judgement word and evaluation decodes a
    /// single judgement token.
    pub label_only: bool,
    pub prompt_template: String,
    pub max_response_len: usize,
    pub model: ModelConfig,
    pub stage1: SftConfig,
    pub stage2: SftConfig,
    pub stage3: GrpoStageConfig,
    pub reward: RewardConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            label_only: false,
            prompt_template: "default".into(),
            max_response_len: 64,
            model: ModelConfig::default(),
            stage1: SftConfig::with_epochs(2),
            stage2: SftConfig::with_epochs(16),
            stage3: GrpoStageConfig::default(),
            reward: RewardConfig::default(),
        }
    }
}

impl Default for SftConfig {
    fn default() -> Self {
        SftConfig::with_epochs(1)
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks hyperparameters. With `stage2_available` false (no stage-2
    /// checkpoint supplied), enabling stage 3 without stage 2 is an error.
    pub fn validate(&self, stage2_available: bool) -> Result<()> {
        if !TEMPLATES.contains(&self.prompt_template.as_str()) {
            return Err(Error::Config(format!(
                "unknown prompt template `{}`",
                self.prompt_template
            )));
        }
        if self.max_response_len == 0 {
            return Err(Error::Config("max_response_len must be at least 1".into()));
        }
        let m = self.model;
        if m.embed == 0 || m.hidden == 0 || m.context == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        for (name, s) in [("stage1", &self.stage1), ("stage2", &self.stage2)] {
            if s.batch_size == 0 || !(s.learning_rate >= 0.0 && s.learning_rate.is_finite()) {
                return Err(Error::Config(format!(
                    "{name}: batch_size must be positive and learning_rate non-negative"
                )));
            }
        }
        if self.stage3.batch_size == 0 {
            return Err(Error::Config("stage3: batch_size must be positive".into()));
        }
        self.stage3.grpo().validate()?;
        self.reward.weights().validate()?;
        self.reward.similarity().validate()?;
        if self.stage3.enabled && !self.stage2.enabled && !stage2_available {
            return Err(Error::Config(
                "stage 3 needs a stage-2 policy: enable stage2 or start from a stage-2 checkpoint"
                    .into(),
            ));
        }
        Ok(())
    }
}
