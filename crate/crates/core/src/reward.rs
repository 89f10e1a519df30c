//! Gated composite reward.
//!
//! `r_total = alpha * r_sem + beta * r_sub + gamma * r_fin`, evaluated only
//! when the final judgement is correct (`r_fin = 1`); otherwise the total is
//! 0. Samples without a gold chain-of-thought get `r_total = r_fin`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{similarity, EmbeddingProvider, SimilarityWeights};
use crate::schema::{
    tokenize, BinaryLabel, CoTAnnotation, HarmCategory, MemeRecord, ParsedResponse,
};

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            alpha: 0.15,
            beta: 0.25,
            gamma: 0.6,
        }
    }
}

impl RewardWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let w = RewardWeights { alpha, beta, gamma };
        w.validate()?;
        Ok(w)
    }

    /// Final-judgement weight `gamma` with the remaining mass split between
    /// `alpha` and `beta` in the given ratio.
    pub fn from_gamma(gamma: f64, alpha_share: f64, beta_share: f64) -> Result<Self> {
        let rest = 1.0 - gamma;
        let total = alpha_share + beta_share;
        Self::new(rest * alpha_share / total, rest * beta_share / total, gamma)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.alpha, self.beta, self.gamma];
        if parts.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!(
                "reward weights must be non-negative, got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::Config(format!(
                "reward weights must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

/// Per-response reward record. Components are kept even when the gate
/// zeroes the total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_sem: f64,
    /// `None` for samples without a gold chain-of-thought.
    pub r_sub: Option<f64>,
    pub r_fin: f64,
    pub r_total: f64,
}

/// Combined caption similarity; 0 when the response has no caption.
pub fn reward_sem(
    response: &ParsedResponse,
    gold: &CoTAnnotation,
    embedder: &dyn EmbeddingProvider,
    weights: &SimilarityWeights,
) -> f64 {
    match &response.caption {
        Some(caption) => {
            let cand = tokenize(caption);
            let refr = tokenize(&gold.caption);
            similarity(&cand, &refr, embedder, weights).combined
        }
        None => 0.0,
    }
}

/// Mean over the five categories of a binary per-category match.
pub fn reward_sub(response: &ParsedResponse, gold: &MemeRecord) -> Result<f64> {
    let cot = gold.cot.as_ref().ok_or_else(|| {
        Error::InvalidArgument(format!(
            "reward_sub needs a chain-of-thought sample, `{}` has a binary label only",
            gold.id
        ))
    })?;
    let applicable = cot.applicable();
    let hits = HarmCategory::ALL
        .into_iter()
        .filter(|c| response.verdict(*c).matches(applicable.contains(c)))
        .count();
    Ok(hits as f64 / 5.0)
}

pub fn reward_fin(response: &ParsedResponse, gold_label: BinaryLabel) -> f64 {
    if response.judgement.label() == Some(gold_label) {
        1.0
    } else {
        0.0
    }
}

/// Weighted combination of precomputed components under the gate.
pub fn gated_total(weights: &RewardWeights, r_sem: f64, r_sub: Option<f64>, r_fin: f64) -> f64 {
    if r_fin != 1.0 {
        return 0.0;
    }
    match r_sub {
        Some(r_sub) => weights.alpha * r_sem + weights.beta * r_sub + weights.gamma * r_fin,
        None => r_fin,
    }
}

pub fn reward_total(
    response: &ParsedResponse,
    gold: &MemeRecord,
    weights: &RewardWeights,
    embedder: &dyn EmbeddingProvider,
    sim_weights: &SimilarityWeights,
) -> RewardBreakdown {
    let r_fin = reward_fin(response, gold.label);
    let (r_sem, r_sub) = match &gold.cot {
        Some(cot) => (
            reward_sem(response, cot, embedder, sim_weights),
            reward_sub(response, gold).ok(),
        ),
        None => (0.0, None),
    };
    RewardBreakdown {
        r_sem,
        r_sub,
        r_fin,
        r_total: gated_total(weights, r_sem, r_sub, r_fin),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{bleu4, emb_similarity, rouge_l, HashEmbedder};
    use crate::schema::{parse_response, serialize_cot, Split, Verdict};
    use proptest::prelude::*;

    fn gold(applicable: &[HarmCategory], with_cot: bool) -> MemeRecord {
        let label = if applicable.is_empty() {
            BinaryLabel::Nonharmful
        } else {
            BinaryLabel::Harmful
        };
        let cot = CoTAnnotation {
            caption: "man knife kill them".into(),
            verdicts: HarmCategory::ALL
                .into_iter()
                .map(|c| {
                    let v = if applicable.contains(&c) {
                        Verdict::Applicable {
                            rationale: "knife kill".into(),
                        }
                    } else {
                        Verdict::NotApplicable
                    };
                    (c, v)
                })
                .collect(),
            judgement: label,
        };
        MemeRecord {
            id: "g".into(),
            image_tokens: vec!["man".into(), "knife".into()],
            text: "kill them".into(),
            label,
            subcategories: applicable.iter().copied().collect(),
            cot: with_cot.then_some(cot),
            split: Split::Unassigned,
        }
    }

    fn perfect(g: &MemeRecord) -> ParsedResponse {
        parse_response(&tokenize(&serialize_cot(g.cot.as_ref().unwrap())))
    }

    #[test]
    fn eq4_hand_case() {
        let w = RewardWeights::new(0.15, 0.25, 0.6).unwrap();
        let total = gated_total(&w, 0.8, Some(1.0), 1.0);
        assert!((total - 0.97).abs() < 1e-12, "{total}");
    }

    #[test]
    fn perfect_response_scores_one() {
        let g = gold(&[HarmCategory::Violence], true);
        let r = reward_total(
            &perfect(&g),
            &g,
            &RewardWeights::default(),
            &HashEmbedder::default(),
            &SimilarityWeights::default(),
        );
        assert_eq!(r.r_sem, 1.0);
        assert_eq!(r.r_sub, Some(1.0));
        assert_eq!(r.r_fin, 1.0);
        assert!((r.r_total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn wrong_judgement_gates_to_zero_but_keeps_components() {
        let g = gold(&[HarmCategory::Violence], true);
        let mut resp = perfect(&g);
        resp.judgement = crate::schema::Judgement::Nonharmful;
        let r = reward_total(
            &resp,
            &g,
            &RewardWeights::default(),
            &HashEmbedder::default(),
            &SimilarityWeights::default(),
        );
        assert_eq!(r.r_fin, 0.0);
        assert_eq!(r.r_total, 0.0);
        assert_eq!(r.r_sem, 1.0);
        assert_eq!(r.r_sub, Some(1.0));
    }

    #[test]
    fn binary_only_sample_uses_r_fin() {
        let g = gold(&[HarmCategory::Vulgar], false);
        let resp = parse_response(&tokenize("The image's label is harmful."));
        let r = reward_total(
            &resp,
            &g,
            &RewardWeights::default(),
            &HashEmbedder::default(),
            &SimilarityWeights::default(),
        );
        assert_eq!(r.r_sub, None);
        assert_eq!(r.r_total, 1.0);
        assert!(reward_sub(&resp, &g).is_err());
    }

    #[test]
    fn reward_sub_counts() {
        let g = gold(&[HarmCategory::Violence], true);
        let mut resp = perfect(&g);
        assert_eq!(reward_sub(&resp, &g).unwrap(), 1.0);
        resp.verdicts[HarmCategory::Vulgar.index()] = crate::schema::ParsedVerdict::Applicable;
        assert!((reward_sub(&resp, &g).unwrap() - 0.8).abs() < 1e-15);
        resp.verdicts = [crate::schema::ParsedVerdict::Missing; 5];
        assert_eq!(reward_sub(&resp, &g).unwrap(), 0.0);
    }

    #[test]
    fn reward_fin_cases() {
        let harmful = parse_response(&tokenize("The image's label is harmful."));
        assert_eq!(reward_fin(&harmful, BinaryLabel::Harmful), 1.0);
        assert_eq!(reward_fin(&harmful, BinaryLabel::Nonharmful), 0.0);
        let junk = parse_response(&tokenize("no verdict here"));
        assert_eq!(reward_fin(&junk, BinaryLabel::Harmful), 0.0);
    }

    #[test]
    fn reward_sem_composes_metrics() {
        let g = gold(&[HarmCategory::Violence], true);
        let mut resp = perfect(&g);
        resp.caption = Some("man fire kill us".into());
        let e = HashEmbedder::default();
        let got = reward_sem(
            &resp,
            g.cot.as_ref().unwrap(),
            &e,
            &SimilarityWeights::default(),
        );
        let c = ["man", "fire", "kill", "us"];
        let r = ["man", "knife", "kill", "them"];
        let want = (bleu4(&c, &[r.to_vec()]) + rouge_l(&c, &r) + emb_similarity(&c, &r, &e)) / 3.0;
        assert!((got - want).abs() < 1e-15);
        resp.caption = None;
        assert_eq!(
            reward_sem(
                &resp,
                g.cot.as_ref().unwrap(),
                &e,
                &SimilarityWeights::default()
            ),
            0.0
        );
    }

    #[test]
    fn weight_validation() {
        assert!(RewardWeights::new(0.5, 0.5, 0.5).is_err());
        assert!(RewardWeights::new(-0.1, 0.5, 0.6).is_err());
        let w = RewardWeights::from_gamma(0.6, 3.0, 5.0).unwrap();
        assert!((w.alpha - 0.15).abs() < 1e-15 && (w.beta - 0.25).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn gate_bound_and_degeneracy(
            r_sem in 0.0f64..=1.0,
            r_sub in proptest::option::of(0.0f64..=1.0),
            fin in any::<bool>(),
            a in 0.0f64..1.0,
            b in 0.0f64..1.0,
        ) {
            let r_fin = if fin { 1.0 } else { 0.0 };
            let (a, b) = (a * 0.5, b * 0.5);
            let w = RewardWeights { alpha: a, beta: b, gamma: 1.0 - a - b };
            let total = gated_total(&w, r_sem, r_sub, r_fin);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&total));
            if r_fin == 0.0 { prop_assert_eq!(total, 0.0); }
            let pure = RewardWeights { alpha: 0.0, beta: 0.0, gamma: 1.0 };
            prop_assert_eq!(gated_total(&pure, r_sem, r_sub, r_fin), r_fin);
        }

        #[test]
        fn monotone_in_components(
            s1 in 0.0f64..=1.0, s2 in 0.0f64..=1.0,
            u1 in 0.0f64..=1.0, u2 in 0.0f64..=1.0,
        ) {
            let w = RewardWeights::default();
            let (lo_s, hi_s) = (s1.min(s2), s1.max(s2));
            let (lo_u, hi_u) = (u1.min(u2), u1.max(u2));
            prop_assert!(gated_total(&w, lo_s, Some(u1), 1.0) <= gated_total(&w, hi_s, Some(u1), 1.0));
            prop_assert!(gated_total(&w, s1, Some(lo_u), 1.0) <= gated_total(&w, s1, Some(hi_u), 1.0));
        }
    }
}
