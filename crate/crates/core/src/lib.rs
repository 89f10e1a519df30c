//! Reasoning-aligned harmful meme detection at desk scale.
//!
//! The crate is organised bottom-up:
//!
//! * [`schema`]: domain types, the four-section chain-of-thought document,
//!   dataset files and stratified splitting.
//! * [`metrics`]: classification metrics, Fleiss' kappa, BLEU-4, ROUGE-L,
//!   greedy embedding similarity and reasoning-alignment scores.
//! * [`reward`]: the gated composite reward.
//! * [`policy`]: a tiny autoregressive policy with hand-written backprop and
//!   the supervised losses.
//! * [`grpo`]: group-relative advantages and the clipped surrogate objective.
//! * [`synth`]: the synthetic meme-surrogate task and mock annotators.
//! * [`trainer`]: the three-stage pipeline, evaluation and ablation sweeps.

pub mod error;
pub mod grpo;
pub mod metrics;
pub mod policy;
pub mod reward;
pub mod schema;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use metrics::{EmbeddingProvider, HashEmbedder};
pub use policy::{Policy, PolicyDims, Vocab};
pub use reward::{RewardBreakdown, RewardWeights};
pub use schema::{
    BinaryLabel, CoTAnnotation, HarmCategory, Judgement, MemeRecord, ParsedResponse, ParsedVerdict,
    PromptSpec, Split, Verdict,
};
