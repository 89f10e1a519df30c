//! The three-stage pipeline: caption fine-tuning, joint label and
//! chain-of-thought fine-tuning, and GRPO with the gated reward.

mod config;
mod eval;
mod logs;
mod sweep;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grpo::{grpo_step, sample_group, GroupRollout, GrpoStats};
use crate::metrics::HashEmbedder;
use crate::policy::{
    Adam, Checkpoint, Policy, SftExample, StageTag, TrainStats, Vocab, JUDGEMENT_CONTEXT,
};
use crate::reward::{reward_total, RewardBreakdown};
use crate::schema::{
    parse_response, render_prompt, serialize_cot, tokenize, CoTAnnotation, MemeRecord,
};
use crate::synth::derive_seed;

pub use config::{GrpoStageConfig, RewardConfig, RunConfig, SftConfig};
pub use eval::{decode_responses, evaluate, evaluate_responses, EvalReport};
pub use logs::{
    read_rollout_log, replay_rollout_log, write_grpo_log, write_rollout_log, write_sft_log,
    RolloutGroupLog, RolloutStepLog,
};
pub use sweep::{alpha_beta_grid, gamma_grid, sweep_reward_weights, write_sweep_csv, SweepRow};

const STAGE1_STREAM: u64 = 1;
const STAGE2_STREAM: u64 = 2;
const STAGE3_STREAM: u64 = 3;

/// Vocabulary covering every token of the given records: prompts, captions
/// and rationales, in first-seen order after the structural tokens.
pub fn build_vocab<'a>(records: impl IntoIterator<Item = &'a MemeRecord>) -> Vocab {
    let mut content = Vec::new();
    for r in records {
        content.extend(r.image_tokens.iter().cloned());
        content.extend(tokenize(&r.text));
        if let Some(cot) = &r.cot {
            content.extend(tokenize(&serialize_cot(cot)));
        }
    }
    Vocab::with_content(content)
}

pub fn init_policy(cfg: &RunConfig, vocab: Vocab) -> Policy {
    Policy::init(vocab, cfg.model, derive_seed(cfg.seed, 0))
}

fn prompt_ids(policy: &Policy, record: &MemeRecord, cfg: &RunConfig) -> Result<Vec<u32>> {
    policy.encode_prompt(&render_prompt(record, &cfg.prompt_template)?)
}

fn cot_tokens(cot: &CoTAnnotation) -> Vec<String> {
    tokenize(&serialize_cot(cot))
}

/// Document prefix through the caption line; loss covers the caption line.
pub fn caption_example(
    policy: &Policy,
    record: &MemeRecord,
    cfg: &RunConfig,
) -> Result<SftExample> {
    let cot = record.cot.as_ref().ok_or_else(|| Error::InvalidRecord {
        id: record.id.clone(),
        reason: "no gold caption".into(),
    })?;
    let toks = cot_tokens(cot);
    let start = toks.iter().position(|t| t == "CAPTION:").unwrap_or(0);
    let end = toks
        .iter()
        .position(|t| t == "REASONING:")
        .unwrap_or(toks.len());
    Ok(SftExample {
        prompt: prompt_ids(policy, record, cfg)?,
        tokens: policy.vocab().encode(&toks[..end])?,
        lm_start: Some(start),
        judgement_pos: None,
    })
}

/// Full document plus end token, supervised by both losses.
pub fn joint_example(policy: &Policy, record: &MemeRecord, cfg: &RunConfig) -> Result<SftExample> {
    let cot = record.cot.as_ref().ok_or_else(|| Error::InvalidRecord {
        id: record.id.clone(),
        reason: "no gold chain-of-thought".into(),
    })?;
    let mut toks = cot_tokens(cot);
    let label_pos = toks
        .iter()
        .rposition(|t| t == record.label.as_str())
        .ok_or_else(|| Error::InvalidRecord {
            id: record.id.clone(),
            reason: "document has no judgement word".into(),
        })?;
    toks.push(crate::policy::EOS.to_string());
    Ok(SftExample {
        prompt: prompt_ids(policy, record, cfg)?,
        tokens: policy.vocab().encode(&toks)?,
        lm_start: Some(0),
        judgement_pos: Some(label_pos),
    })
}

/// Judgement slot only, supervised by the classification loss.
pub fn label_example(policy: &Policy, record: &MemeRecord, cfg: &RunConfig) -> Result<SftExample> {
    let mut toks: Vec<&str> = JUDGEMENT_CONTEXT.to_vec();
    toks.push(record.label.as_str());
    Ok(SftExample {
        prompt: prompt_ids(policy, record, cfg)?,
        tokens: policy.vocab().encode(&toks)?,
        lm_start: None,
        judgement_pos: Some(toks.len() - 1),
    })
}

/// Visits examples in freshly shuffled epochs, one batch per step.
fn batches(n: usize, batch_size: usize, steps: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut b = Vec::with_capacity(batch_size);
        while b.len() < batch_size.min(n) {
            if cursor == order.len() {
                order = (0..n).collect();
                order.shuffle(&mut rng);
                cursor = 0;
            }
            b.push(order[cursor]);
            cursor += 1;
        }
        out.push(b);
    }
    out
}

fn run_sft(
    policy: &mut Policy,
    examples: &[SftExample],
    stage: &SftConfig,
    seed: u64,
) -> Result<Vec<TrainStats>> {
    if examples.is_empty() {
        return Ok(Vec::new());
    }
    let steps = stage.total_steps(examples.len());
    let mut opt = Adam::new(stage.learning_rate, policy.params().len());
    let mut log = Vec::with_capacity(steps);
    for (step, idx) in batches(examples.len(), stage.batch_size, steps, seed)
        .into_iter()
        .enumerate()
    {
        let batch: Vec<SftExample> = idx.iter().map(|&i| examples[i].clone()).collect();
        log.push(policy.sft_step(&mut opt, &batch, step)?);
    }
    Ok(log)
}

/// Caption-only supervised fine-tuning on records with a gold caption.
pub fn run_stage1(
    cfg: &RunConfig,
    policy: &mut Policy,
    train: &[MemeRecord],
) -> Result<Vec<TrainStats>> {
    let examples: Vec<SftExample> = train
        .iter()
        .filter(|r| r.cot.is_some())
        .map(|r| caption_example(policy, r, cfg))
        .collect::<Result<_>>()?;
    if examples.is_empty() {
        return Err(Error::InvalidArgument(
            "stage 1 needs records with gold captions".into(),
        ));
    }
    run_sft(
        policy,
        &examples,
        &cfg.stage1,
        derive_seed(cfg.seed, STAGE1_STREAM),
    )
}

/// Joint fine-tuning: chain-of-thought records contribute both losses,
/// binary-only records the classification loss. With `label_only` every
/// record contributes the classification loss only.
pub fn run_stage2(
    cfg: &RunConfig,
    policy: &mut Policy,
    train: &[MemeRecord],
) -> Result<Vec<TrainStats>> {
    let examples: Vec<SftExample> = train
        .iter()
        .map(|r| {
            if r.cot.is_some() && !cfg.label_only {
                joint_example(policy, r, cfg)
            } else {
                label_example(policy, r, cfg)
            }
        })
        .collect::<Result<_>>()?;
    if examples.is_empty() {
        return Err(Error::InvalidArgument(
            "stage 2 needs training records".into(),
        ));
    }
    run_sft(
        policy,
        &examples,
        &cfg.stage2,
        derive_seed(cfg.seed, STAGE2_STREAM),
    )
}

/// Result of a GRPO stage.
#[derive(Debug, Clone)]
pub struct Stage3Outcome {
    pub log: Vec<GrpoStats>,
    pub warnings: Vec<String>,
    /// Present when rollout recording was requested.
    pub rollouts: Option<Vec<RolloutStepLog>>,
}

/// Forced response prefix and generation budget for rollouts and decoding.
pub(crate) fn response_shape(policy: &Policy, cfg: &RunConfig) -> Result<(Vec<u32>, usize)> {
    if cfg.label_only {
        Ok((policy.vocab().encode(&JUDGEMENT_CONTEXT)?, 1))
    } else {
        Ok((Vec::new(), cfg.max_response_len))
    }
}

/// Scores one decoded response against its gold record.
pub fn score_response(
    tokens: &[String],
    gold: &MemeRecord,
    cfg: &RunConfig,
    embedder: &HashEmbedder,
) -> RewardBreakdown {
    let parsed = parse_response(tokens);
    let weights = cfg.reward.weights();
    if cfg.label_only && gold.cot.is_some() {
        let mut binary = gold.clone();
        binary.cot = None;
        return reward_total(
            &parsed,
            &binary,
            &weights,
            embedder,
            &cfg.reward.similarity(),
        );
    }
    reward_total(&parsed, gold, &weights, embedder, &cfg.reward.similarity())
}

/// GRPO on the training prompts, starting from a stage-2 (or later) policy.
pub fn run_stage3(
    cfg: &RunConfig,
    policy: &mut Policy,
    start: StageTag,
    train: &[MemeRecord],
    record_rollouts: bool,
) -> Result<Stage3Outcome> {
    if start < StageTag::Stage2 {
        return Err(Error::Config(format!(
            "stage 3 must start from a stage-2 checkpoint, got `{start}`"
        )));
    }
    if train.is_empty() {
        return Err(Error::InvalidArgument(
            "stage 3 needs training prompts".into(),
        ));
    }
    let stage = &cfg.stage3;
    let grpo = stage.grpo();
    grpo.validate()?;
    cfg.reward.weights().validate()?;
    let embedder = HashEmbedder::default();
    let prompts: Vec<Vec<u32>> = train
        .iter()
        .map(|r| prompt_ids(policy, r, cfg))
        .collect::<Result<_>>()?;
    let (prefix, max_len) = response_shape(policy, cfg)?;
    let steps = stage.total_steps(train.len());
    let seed = derive_seed(cfg.seed, STAGE3_STREAM);
    let mut opt = Adam::new(stage.learning_rate, policy.params().len());
    let mut log = Vec::with_capacity(steps);
    let mut warnings = Vec::new();
    let mut rollouts = record_rollouts.then(Vec::new);
    let mut streak = 0usize;
    for (step, idx) in batches(train.len(), stage.batch_size, steps, seed)
        .into_iter()
        .enumerate()
    {
        let snapshot = policy.clone();
        let mut groups: Vec<GroupRollout> = idx
            .par_iter()
            .enumerate()
            .map(|(j, &i)| {
                let gold = &train[i];
                let seed_base = derive_seed(seed, (step * stage.batch_size + j) as u64);
                sample_group(
                    &snapshot,
                    &gold.id,
                    &prompts[i],
                    &prefix,
                    max_len,
                    &grpo,
                    seed_base,
                    |t| score_response(t, gold, cfg, &embedder),
                )
            })
            .collect::<Result<_>>()?;
        let stats = grpo_step(policy, &mut opt, &mut groups, &grpo, step)?;
        for g in &groups {
            if g.is_degenerate() {
                streak += 1;
                if streak == stage.patience {
                    warnings.push(format!(
                        "reward sparsity: {streak} consecutive rollout groups up to step {step} had zero advantage"
                    ));
                }
            } else {
                streak = 0;
            }
        }
        if let Some(r) = rollouts.as_mut() {
            r.push(RolloutStepLog::from_groups(step, &groups, &stats));
        }
        log.push(stats);
    }
    Ok(Stage3Outcome {
        log,
        warnings,
        rollouts,
    })
}

/// Files and in-memory results of a pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub policy: Policy,
    pub stage: StageTag,
    pub stage1_log: Option<Vec<TrainStats>>,
    pub stage2_log: Option<Vec<TrainStats>>,
    pub stage3: Option<Stage3Outcome>,
    pub checkpoints: Vec<PathBuf>,
}

/// Summary persisted next to the checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub final_stage: StageTag,
    pub stages_run: Vec<StageTag>,
    pub warnings: Vec<String>,
}

/// Runs the enabled stages in order. `start` continues from an existing
/// checkpoint instead of a fresh initialisation; `vocab_records` seeds the
/// vocabulary for a fresh policy (typically train and test together). When
/// `out_dir` is given, checkpoints, CSV logs and a manifest are written there.
pub fn run_pipeline(
    cfg: &RunConfig,
    train: &[MemeRecord],
    vocab_records: &[MemeRecord],
    start: Option<Checkpoint>,
    out_dir: Option<&Path>,
    record_rollouts: bool,
) -> Result<PipelineRun> {
    let start_stage = start.as_ref().map(|c| c.stage).unwrap_or(StageTag::Init);
    cfg.validate(start_stage >= StageTag::Stage2)?;
    let mut policy = match start {
        Some(ck) => ck.into_policy()?,
        None => init_policy(cfg, build_vocab(vocab_records.iter().chain(train))),
    };
    let mut run = PipelineRun {
        policy: policy.clone(),
        stage: start_stage,
        stage1_log: None,
        stage2_log: None,
        stage3: None,
        checkpoints: Vec::new(),
    };
    let mut stages_run = Vec::new();
    let save = |policy: &Policy, tag: StageTag, run: &mut PipelineRun| -> Result<()> {
        if let Some(dir) = out_dir {
            let path = dir.join(format!("{tag}.ckpt.json"));
            Checkpoint::new(policy, tag).save(&path)?;
            run.checkpoints.push(path);
        }
        Ok(())
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    if cfg.stage1.enabled {
        let log = run_stage1(cfg, &mut policy, train)?;
        if let Some(dir) = out_dir {
            write_sft_log(&log, std::fs::File::create(dir.join("stage1.csv"))?)?;
        }
        run.stage = StageTag::Stage1;
        save(&policy, StageTag::Stage1, &mut run)?;
        run.stage1_log = Some(log);
        stages_run.push(StageTag::Stage1);
    }
    if cfg.stage2.enabled {
        let log = run_stage2(cfg, &mut policy, train)?;
        if let Some(dir) = out_dir {
            write_sft_log(&log, std::fs::File::create(dir.join("stage2.csv"))?)?;
        }
        run.stage = StageTag::Stage2;
        save(&policy, StageTag::Stage2, &mut run)?;
        run.stage2_log = Some(log);
        stages_run.push(StageTag::Stage2);
    }
    if cfg.stage3.enabled {
        let outcome = run_stage3(cfg, &mut policy, run.stage, train, record_rollouts)?;
        if let Some(dir) = out_dir {
            write_grpo_log(&outcome.log, std::fs::File::create(dir.join("stage3.csv"))?)?;
            if let Some(r) = &outcome.rollouts {
                write_rollout_log(r, std::fs::File::create(dir.join("rollouts.jsonl"))?)?;
            }
        }
        run.stage = StageTag::Stage3;
        save(&policy, StageTag::Stage3, &mut run)?;
        run.stage3 = Some(outcome);
        stages_run.push(StageTag::Stage3);
    }
    if let Some(dir) = out_dir {
        let manifest = RunManifest {
            seed: cfg.seed,
            final_stage: run.stage,
            stages_run,
            warnings: run
                .stage3
                .as_ref()
                .map(|s| s.warnings.clone())
                .unwrap_or_default(),
        };
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_vec_pretty(&manifest)?,
        )?;
        std::fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
    }
    run.policy = policy;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_dataset, TaskRules};

    fn tiny_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.stage1.steps = Some(5);
        cfg.stage2.steps = Some(5);
        cfg.stage3.steps = Some(3);
        cfg.stage3.batch_size = 2;
        cfg.stage3.group_size = 3;
        cfg.max_response_len = 20;
        cfg
    }

    fn data() -> Vec<MemeRecord> {
        generate_dataset(&TaskRules::default(), 40, 3).unwrap()
    }

    #[test]
    fn examples_have_expected_shape() {
        let cfg = RunConfig::default();
        let d = data();
        let p = init_policy(&cfg, build_vocab(&d));
        let r = d.iter().find(|r| r.cot.is_some()).unwrap();
        let cap = caption_example(&p, r, &cfg).unwrap();
        let cap_toks = p.vocab().decode(&cap.tokens);
        assert_eq!(cap_toks[cap.lm_start.unwrap()], "CAPTION:");
        assert_eq!(cap_toks.last().unwrap(), ".");
        let joint = joint_example(&p, r, &cfg).unwrap();
        let toks = p.vocab().decode(&joint.tokens);
        let j = joint.judgement_pos.unwrap();
        assert_eq!(toks[j], r.label.as_str());
        assert_eq!(&toks[j - 6..j], JUDGEMENT_CONTEXT);
        assert_eq!(toks.last().unwrap(), crate::policy::EOS);
        let lab = label_example(&p, r, &cfg).unwrap();
        assert_eq!(lab.judgement_pos, Some(6));
        assert_eq!(lab.lm_start, None);
    }

    #[test]
    fn batches_cover_each_epoch() {
        let b = batches(10, 4, 5, 1);
        let first: std::collections::BTreeSet<usize> = b[..2]
            .iter()
            .flatten()
            .copied()
            .chain(b[2][..2].iter().copied())
            .collect();
        assert_eq!(first.len(), 10);
        assert!(b.iter().all(|x| x.len() == 4));
    }

    #[test]
    fn zero_steps_leave_initialisation() {
        let mut cfg = tiny_cfg();
        cfg.stage1.steps = Some(0);
        let d = data();
        let p0 = init_policy(&cfg, build_vocab(&d));
        let mut p = p0.clone();
        assert!(run_stage1(&cfg, &mut p, &d).unwrap().is_empty());
        assert_eq!(p, p0);
    }

    #[test]
    fn stage2_logs_loss_decomposition() {
        let cfg = tiny_cfg();
        let d = data();
        let mut p = init_policy(&cfg, build_vocab(&d));
        for s in run_stage2(&cfg, &mut p, &d).unwrap() {
            assert!((s.l_cls.unwrap() + s.l_cot.unwrap() - s.l_total).abs() < 1e-9);
        }
        let mut lo = cfg.clone();
        lo.label_only = true;
        let mut p = init_policy(&lo, build_vocab(&d));
        for s in run_stage2(&lo, &mut p, &d).unwrap() {
            assert_eq!(s.l_cot, None);
            assert_eq!(s.l_cls, Some(s.l_total));
        }
    }

    #[test]
    fn stage3_rejects_pre_stage2_policy() {
        let cfg = tiny_cfg();
        let d = data();
        let mut p = init_policy(&cfg, build_vocab(&d));
        assert!(matches!(
            run_stage3(&cfg, &mut p, StageTag::Stage1, &d, false),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn pipeline_is_deterministic_and_replayable() {
        let cfg = tiny_cfg();
        let d = data();
        let a = run_pipeline(&cfg, &d, &[], None, None, true).unwrap();
        let b = run_pipeline(&cfg, &d, &[], None, None, true).unwrap();
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.stage, StageTag::Stage3);
        let s3 = a.stage3.unwrap();
        let rollouts = s3.rollouts.unwrap();
        let worst = replay_rollout_log(&rollouts, &d, &cfg).unwrap();
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn checkpoint_resume_reproduces_trajectory() {
        let cfg = tiny_cfg();
        let d = data();
        let dir = tempfile::tempdir().unwrap();
        let full = run_pipeline(&cfg, &d, &[], None, Some(dir.path()), false).unwrap();
        let mut resume_cfg = cfg.clone();
        resume_cfg.stage1.enabled = false;
        resume_cfg.stage2.enabled = false;
        let ck = Checkpoint::load(dir.path().join("stage2.ckpt.json")).unwrap();
        let resumed = run_pipeline(&resume_cfg, &d, &[], Some(ck), None, false).unwrap();
        assert_eq!(resumed.policy, full.policy);
        assert!(dir.path().join("stage3.csv").exists());
        assert!(dir.path().join("manifest.json").exists());
    }
}
