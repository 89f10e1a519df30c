use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{prompt_ids, response_shape, RunConfig};
use crate::error::{Error, Result};
use crate::metrics::{
    classification_report, decision_alignment, similarity, sub_acc, ClassificationReport,
    EmbeddingProvider, SimilarityScores, SimilarityWeights, SubAccReport,
};
use crate::policy::{Decoding, Policy};
use crate::schema::{parse_response, tokenize, MemeRecord, ParsedResponse};

/// Evaluation of one policy on a labelled set. Reasoning and caption fields
/// are absent for label-only runs, which emit no reasoning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub classification: ClassificationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub well_formed_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sub_acc: Option<SubAccReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decision_alignment: Option<f64>,
    /// Mean caption similarity over records with a gold caption.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub similarity: Option<SimilarityScores>,
}

/// Greedy decoding of every record's prompt, in record order.
pub fn decode_responses(
    policy: &Policy,
    records: &[MemeRecord],
    cfg: &RunConfig,
) -> Result<Vec<Vec<String>>> {
    let (prefix, max_len) = response_shape(policy, cfg)?;
    records
        .par_iter()
        .map(|r| {
            let prompt = prompt_ids(policy, r, cfg)?;
            let out = policy.sample_ids(&prompt, &prefix, max_len, Decoding::Greedy, 0);
            let mut ids = prefix.clone();
            ids.extend(out.ids);
            Ok(policy.vocab().decode(&ids))
        })
        .collect()
}

/// Scores already decoded responses against their gold records.
pub fn evaluate_responses<S: AsRef<str> + Sync>(
    responses: &[Vec<S>],
    records: &[MemeRecord],
    label_only: bool,
    embedder: &dyn EmbeddingProvider,
    sim_weights: &SimilarityWeights,
) -> Result<EvalReport> {
    if responses.len() != records.len() {
        return Err(Error::LengthMismatch {
            left: responses.len(),
            right: records.len(),
        });
    }
    let parsed: Vec<ParsedResponse> = responses.par_iter().map(|r| parse_response(r)).collect();
    let judgements: Vec<_> = parsed.iter().map(|p| p.judgement).collect();
    let gold: Vec<_> = records.iter().map(|r| r.label).collect();
    let classification = classification_report(&judgements, &gold)?;
    if label_only {
        return Ok(EvalReport {
            n: records.len(),
            classification,
            well_formed_rate: None,
            sub_acc: None,
            decision_alignment: None,
            similarity: None,
        });
    }
    let well_formed = parsed.iter().filter(|p| p.is_well_formed()).count();
    let mut sims = Vec::new();
    for (p, r) in parsed.iter().zip(records) {
        if let Some(cot) = &r.cot {
            let cand = p.caption.as_deref().map(tokenize).unwrap_or_default();
            sims.push(similarity(
                &cand,
                &tokenize(&cot.caption),
                embedder,
                sim_weights,
            ));
        }
    }
    let similarity = (!sims.is_empty()).then(|| {
        let n = sims.len() as f64;
        let mean = |f: fn(&SimilarityScores) -> f64| sims.iter().map(f).sum::<f64>() / n;
        SimilarityScores::new(
            mean(|s| s.bleu4),
            mean(|s| s.rouge_l),
            mean(|s| s.emb_sim),
            sim_weights,
        )
    });
    Ok(EvalReport {
        n: records.len(),
        classification,
        well_formed_rate: Some(well_formed as f64 / records.len() as f64),
        sub_acc: Some(sub_acc(&parsed, records)?),
        decision_alignment: Some(decision_alignment(&parsed)),
        similarity,
    })
}

/// Greedy-decodes every record and scores the responses.
pub fn evaluate(
    policy: &Policy,
    records: &[MemeRecord],
    cfg: &RunConfig,
    embedder: &dyn EmbeddingProvider,
) -> Result<EvalReport> {
    let responses = decode_responses(policy, records, cfg)?;
    evaluate_responses(
        &responses,
        records,
        cfg.label_only,
        embedder,
        &cfg.reward.similarity(),
    )
}
