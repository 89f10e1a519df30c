//! Synthetic meme-surrogate task, oracle annotations and simulated
//! multi-annotator cross-verification.
//!
//! A record is two image tokens and a short text drawn from disjoint slot
//! vocabularies. A category is present when one of its trigger pairs occurs,
//! the first token in the image and the second in the text, so neither
//! modality alone identifies harm.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{
    tokenize, BinaryLabel, CoTAnnotation, HarmCategory, MemeRecord, Split, Verdict,
};

pub const RULES_VERSION: u32 = 1;

/// Stable per-item seed derived from a base seed (SplitMix64 finaliser).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Generator and labelling rules, stored as a versioned TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskRules {
    pub version: u32,
    /// Each image position draws from its own slot.
    pub image_slots: Vec<Vec<String>>,
    /// Each text position draws from its own slot.
    pub text_slots: Vec<Vec<String>>,
    pub noise_tokens: Vec<String>,
    /// Probability that a noise token is inserted into the text.
    pub noise_rate: f64,
    pub harmful_fraction: f64,
    /// Probability that a record carries a gold chain-of-thought.
    pub cot_fraction: f64,
    /// `(image token, text token)` pairs per category.
    pub triggers: BTreeMap<HarmCategory, Vec<(String, String)>>,
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn pairs(xs: &[(&str, &str)]) -> Vec<(String, String)> {
    xs.iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

impl Default for TaskRules {
    fn default() -> Self {
        use HarmCategory::*;
        TaskRules {
            version: RULES_VERSION,
            image_slots: vec![
                strings(&["cat", "dog", "man", "woman", "child", "crowd"]),
                strings(&["knife", "flag", "bed", "street", "bottle", "fire"]),
            ],
            text_slots: vec![
                strings(&["hate", "love", "kill", "kiss", "mock", "join"]),
                strings(&["them", "us", "you", "tonight", "forever", "here"]),
            ],
            noise_tokens: strings(&["lol", "meme"]),
            noise_rate: 0.1,
            harmful_fraction: 0.45,
            cot_fraction: 0.5,
            triggers: [
                (
                    Discrimination,
                    pairs(&[("crowd", "hate"), ("woman", "them")]),
                ),
                (Offensive, pairs(&[("dog", "mock"), ("child", "you")])),
                (Violence, pairs(&[("knife", "kill"), ("fire", "us")])),
                (Vulgar, pairs(&[("bed", "kiss"), ("bottle", "tonight")])),
                (
                    Antagonism,
                    pairs(&[("flag", "join"), ("street", "forever")]),
                ),
            ]
            .into_iter()
            .collect(),
        }
    }
}

impl TaskRules {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let rules: TaskRules =
            toml::from_str(text).map_err(|e| Error::Config(format!("rules file: {e}")))?;
        rules.validate()?;
        Ok(rules)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    /// All content tokens in first-seen order: image slots, text slots, noise.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.image_slots
            .iter()
            .flatten()
            .chain(self.text_slots.iter().flatten())
            .chain(&self.noise_tokens)
            .filter(|t| seen.insert(t.as_str()))
            .cloned()
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.version != RULES_VERSION {
            return bad(format!(
                "rules version {} is not supported (expected {RULES_VERSION})",
                self.version
            ));
        }
        if self.image_slots.is_empty() || self.text_slots.is_empty() {
            return bad("rules need at least one image slot and one text slot".into());
        }
        let image: BTreeSet<&str> = self
            .image_slots
            .iter()
            .flatten()
            .map(String::as_str)
            .collect();
        let text: BTreeSet<&str> = self
            .text_slots
            .iter()
            .flatten()
            .map(String::as_str)
            .collect();
        let noise: BTreeSet<&str> = self.noise_tokens.iter().map(String::as_str).collect();
        if self
            .image_slots
            .iter()
            .chain(&self.text_slots)
            .any(|s| s.is_empty())
        {
            return bad("slots must be non-empty".into());
        }
        let slot_total: usize = self
            .image_slots
            .iter()
            .chain(&self.text_slots)
            .map(Vec::len)
            .sum();
        if slot_total != image.len() + text.len() || !image.is_disjoint(&text) {
            return bad("slot vocabularies must be pairwise disjoint".into());
        }
        if !noise.is_disjoint(&image) || !noise.is_disjoint(&text) {
            return bad("noise tokens must not appear in content slots".into());
        }
        for t in image.iter().chain(&text).chain(&noise) {
            if tokenize(t).len() != 1 || crate::schema::is_reserved_token(t) {
                return bad(format!("`{t}` is not a plain content token"));
            }
        }
        for (name, p) in [
            ("noise_rate", self.noise_rate),
            ("harmful_fraction", self.harmful_fraction),
            ("cot_fraction", self.cot_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        let mut all_pairs = BTreeSet::new();
        for (cat, ps) in &self.triggers {
            for (a, b) in ps {
                if !image.contains(a.as_str()) || !text.contains(b.as_str()) {
                    return bad(format!(
                        "{cat} trigger ({a}, {b}) must pair an image token with a text token"
                    ));
                }
                if !all_pairs.insert((a, b)) {
                    return bad(format!("trigger ({a}, {b}) is listed twice"));
                }
            }
        }
        if self.harmful_fraction > 0.0 && all_pairs.is_empty() {
            return bad("harmful_fraction > 0 needs at least one trigger".into());
        }
        Ok(())
    }

    /// The first trigger pair of each category present in the content.
    pub fn matched_triggers(
        &self,
        image_tokens: &[String],
        text_tokens: &[String],
    ) -> BTreeMap<HarmCategory, (String, String)> {
        let mut out = BTreeMap::new();
        for (cat, ps) in &self.triggers {
            if let Some(p) = ps
                .iter()
                .find(|(a, b)| image_tokens.contains(a) && text_tokens.contains(b))
            {
                out.insert(*cat, p.clone());
            }
        }
        out
    }

    /// Rule-based lookup classifier.
    pub fn classify(&self, record: &MemeRecord) -> BinaryLabel {
        if self
            .matched_triggers(&record.image_tokens, &tokenize(&record.text))
            .is_empty()
        {
            BinaryLabel::Nonharmful
        } else {
            BinaryLabel::Harmful
        }
    }

    fn content_text_tokens(&self, record: &MemeRecord) -> Vec<String> {
        tokenize(&record.text)
            .into_iter()
            .filter(|t| !self.noise_tokens.contains(t))
            .collect()
    }
}

/// Deterministic gold chain-of-thought for a record generated under `rules`.
pub fn oracle_annotate(record: &MemeRecord, rules: &TaskRules) -> CoTAnnotation {
    let text = rules.content_text_tokens(record);
    let matched = rules.matched_triggers(&record.image_tokens, &text);
    let caption = record
        .image_tokens
        .iter()
        .chain(&text)
        .cloned()
        .collect::<Vec<_>>()
        .join(" ");
    let verdicts = HarmCategory::ALL
        .into_iter()
        .map(|c| {
            let v = match matched.get(&c) {
                Some((a, b)) => Verdict::Applicable {
                    rationale: format!("{a} {b}"),
                },
                None => Verdict::NotApplicable,
            };
            (c, v)
        })
        .collect();
    CoTAnnotation {
        caption,
        verdicts,
        judgement: if matched.is_empty() {
            BinaryLabel::Nonharmful
        } else {
            BinaryLabel::Harmful
        },
    }
}

fn draw_content(rules: &TaskRules, rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<String>) {
    let pick = |slots: &[Vec<String>], rng: &mut ChaCha8Rng| -> Vec<String> {
        slots
            .iter()
            .map(|s| s.choose(rng).unwrap().clone())
            .collect()
    };
    (pick(&rules.image_slots, rng), pick(&rules.text_slots, rng))
}

fn place(tokens: &mut [String], slots: &[Vec<String>], token: &str) {
    if let Some(i) = slots.iter().position(|s| s.iter().any(|t| t == token)) {
        tokens[i] = token.to_string();
    }
}

fn generate_record(rules: &TaskRules, index: usize, seed: u64) -> MemeRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, index as u64));
    let harmful = rng.random::<f64>() < rules.harmful_fraction;
    let (mut image, mut text) = draw_content(rules, &mut rng);
    if harmful {
        let cats: Vec<&HarmCategory> = rules
            .triggers
            .keys()
            .filter(|c| !rules.triggers[c].is_empty())
            .collect();
        let cat = cats.choose(&mut rng).unwrap();
        let (a, b) = rules.triggers[cat].choose(&mut rng).unwrap();
        place(&mut image, &rules.image_slots, a);
        place(&mut text, &rules.text_slots, b);
    } else {
        while !rules.matched_triggers(&image, &text).is_empty() {
            (image, text) = draw_content(rules, &mut rng);
        }
    }
    let mut surface = text.clone();
    if !rules.noise_tokens.is_empty() && rng.random::<f64>() < rules.noise_rate {
        let noise = rules.noise_tokens.choose(&mut rng).unwrap().clone();
        let at = rng.random_range(0..=surface.len());
        surface.insert(at, noise);
    }
    let with_cot = rng.random::<f64>() < rules.cot_fraction;
    let mut record = MemeRecord {
        id: format!("m{index:06}"),
        image_tokens: image,
        text: surface.join(" "),
        label: BinaryLabel::Nonharmful,
        subcategories: BTreeSet::new(),
        cot: None,
        split: Split::Unassigned,
    };
    let gold = oracle_annotate(&record, rules);
    record.label = gold.judgement;
    record.subcategories = gold.applicable();
    record.cot = with_cot.then_some(gold);
    record
}

/// `n` records generated in parallel from per-record derived seeds.
pub fn generate_dataset(rules: &TaskRules, n: usize, seed: u64) -> Result<Vec<MemeRecord>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "dataset size must be at least 1".into(),
        ));
    }
    rules.validate()?;
    Ok((0..n)
        .into_par_iter()
        .map(|i| generate_record(rules, i, seed))
        .collect())
}

/// A simulated annotator that reproduces the oracle annotation but flips the
/// final judgement with probability `error_rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockAnnotator {
    pub id: String,
    pub error_rate: f64,
    pub seed: u64,
}

impl MockAnnotator {
    pub fn new(id: impl Into<String>, error_rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&error_rate) {
            return Err(Error::InvalidArgument(format!(
                "error_rate must lie in [0, 1), got {error_rate}"
            )));
        }
        Ok(MockAnnotator {
            id: id.into(),
            error_rate,
            seed,
        })
    }

    /// Deterministic in `(seed, record.id)`. A flipped proposal keeps the
    /// oracle caption and verdicts, so it may contradict them.
    pub fn annotate(&self, record: &MemeRecord, rules: &TaskRules) -> CoTAnnotation {
        let mut ann = oracle_annotate(record, rules);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, hash_str(&record.id)));
        if rng.random::<f64>() < self.error_rate {
            ann.judgement = ann.judgement.flipped();
        }
        ann
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verification {
    /// All annotators agree. `corrected` is set when the shared judgement
    /// was wrong and `annotation` holds the oracle replacement.
    Consistent {
        annotation: CoTAnnotation,
        corrected: bool,
    },
    /// Annotators disagree; `resolved` is the oracle annotation.
    Disputed {
        proposals: Vec<CoTAnnotation>,
        resolved: CoTAnnotation,
    },
}

impl Verification {
    pub fn is_consistent(&self) -> bool {
        matches!(self, Verification::Consistent { .. })
    }

    pub fn annotation(&self) -> &CoTAnnotation {
        match self {
            Verification::Consistent { annotation, .. } => annotation,
            Verification::Disputed { resolved, .. } => resolved,
        }
    }
}

pub fn cross_verify(
    record: &MemeRecord,
    annotators: &[MockAnnotator],
    rules: &TaskRules,
) -> Result<Verification> {
    if annotators.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "cross-verification needs at least 2 annotators, got {}",
            annotators.len()
        )));
    }
    let proposals: Vec<CoTAnnotation> = annotators
        .iter()
        .map(|a| a.annotate(record, rules))
        .collect();
    let oracle = oracle_annotate(record, rules);
    if proposals
        .iter()
        .all(|p| p.judgement == proposals[0].judgement)
    {
        let corrected = proposals[0].judgement != oracle.judgement;
        let annotation = if corrected {
            oracle
        } else {
            proposals.into_iter().next().unwrap()
        };
        Ok(Verification::Consistent {
            annotation,
            corrected,
        })
    } else {
        Ok(Verification::Disputed {
            proposals,
            resolved: oracle,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationSummary {
    pub records: usize,
    pub consistent: usize,
    pub corrected: usize,
    pub disputed: usize,
    pub consistency_rate: f64,
}

pub fn verify_dataset(
    records: &[MemeRecord],
    annotators: &[MockAnnotator],
    rules: &TaskRules,
) -> Result<(Vec<Verification>, VerificationSummary)> {
    let outcomes: Vec<Verification> = records
        .par_iter()
        .map(|r| cross_verify(r, annotators, rules))
        .collect::<Result<_>>()?;
    let consistent = outcomes.iter().filter(|v| v.is_consistent()).count();
    let corrected = outcomes
        .iter()
        .filter(|v| {
            matches!(
                v,
                Verification::Consistent {
                    corrected: true,
                    ..
                }
            )
        })
        .count();
    let summary = VerificationSummary {
        records: records.len(),
        consistent,
        corrected,
        disputed: records.len() - consistent,
        consistency_rate: if records.is_empty() {
            0.0
        } else {
            consistent as f64 / records.len() as f64
        },
    };
    Ok((outcomes, summary))
}

/// Probability that independent binary judgement flips leave every
/// annotator agreeing: nobody flips or everybody flips.
pub fn analytic_consistency(error_rates: &[f64]) -> f64 {
    let none: f64 = error_rates.iter().map(|e| 1.0 - e).product();
    let all: f64 = error_rates.iter().product();
    none + all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{parse_response, serialize_cot, Judgement};

    #[test]
    fn default_rules_are_valid_and_round_trip_through_toml() {
        let rules = TaskRules::default();
        rules.validate().unwrap();
        let text = rules.to_toml_string().unwrap();
        assert_eq!(TaskRules::from_toml_str(&text).unwrap(), rules);
        assert_eq!(rules.vocabulary().len(), 26);
    }

    #[test]
    fn invalid_rules_are_rejected() {
        let mut r = TaskRules::default();
        r.triggers
            .get_mut(&HarmCategory::Vulgar)
            .unwrap()
            .push(("crowd".into(), "hate".into()));
        assert!(r.validate().is_err());
        let mut r = TaskRules::default();
        r.triggers
            .get_mut(&HarmCategory::Vulgar)
            .unwrap()
            .push(("hate".into(), "crowd".into()));
        assert!(r.validate().is_err());
        let r = TaskRules {
            version: 2,
            ..TaskRules::default()
        };
        assert!(r.validate().is_err());
    }

    #[test]
    fn trigger_rules_decide_labels() {
        let rules = TaskRules::default();
        let data = generate_dataset(&rules, 3000, 5).unwrap();
        for r in &data {
            r.validate().unwrap();
            assert_eq!(rules.classify(r), r.label);
            let matched = rules.matched_triggers(&r.image_tokens, &tokenize(&r.text));
            assert_eq!(
                matched.keys().copied().collect::<BTreeSet<_>>(),
                r.subcategories
            );
            let gold = oracle_annotate(r, &rules);
            assert_eq!(gold.judgement, r.label);
            gold.validate().unwrap();
            if r.label == BinaryLabel::Nonharmful {
                assert!(gold.applicable().is_empty());
            }
            let parsed = parse_response(&tokenize(&serialize_cot(&gold)));
            assert_eq!(parsed.judgement, Judgement::from(gold.judgement));
            if let Some(cot) = &r.cot {
                assert_eq!(cot, &gold);
            }
        }
    }

    #[test]
    fn violence_trigger_is_detected() {
        let rules = TaskRules::default();
        let r = MemeRecord {
            id: "v".into(),
            image_tokens: vec!["man".into(), "knife".into()],
            text: "kill here".into(),
            label: BinaryLabel::Harmful,
            subcategories: [HarmCategory::Violence].into(),
            cot: None,
            split: Split::Unassigned,
        };
        let gold = oracle_annotate(&r, &rules);
        assert_eq!(gold.applicable(), [HarmCategory::Violence].into());
        assert_eq!(gold.caption, "man knife kill here");
    }

    #[test]
    fn generation_is_reproducible() {
        let rules = TaskRules::default();
        assert_eq!(
            generate_dataset(&rules, 200, 9).unwrap(),
            generate_dataset(&rules, 200, 9).unwrap()
        );
        assert_ne!(
            generate_dataset(&rules, 200, 9).unwrap(),
            generate_dataset(&rules, 200, 10).unwrap()
        );
        assert!(generate_dataset(&rules, 0, 9).is_err());
    }

    #[test]
    fn harmful_fraction_is_calibrated() {
        let data = generate_dataset(&TaskRules::default(), 10_000, 1).unwrap();
        let frac = data.iter().filter(|r| r.label.is_harmful()).count() as f64 / 1e4;
        assert!((frac - 0.45).abs() <= 0.03, "{frac}");
    }

    #[test]
    fn error_free_annotators_always_agree() {
        let rules = TaskRules::default();
        let data = generate_dataset(&rules, 500, 2).unwrap();
        let anns: Vec<_> = (0..3)
            .map(|i| MockAnnotator::new(format!("a{i}"), 0.0, i).unwrap())
            .collect();
        let (_, summary) = verify_dataset(&data, &anns, &rules).unwrap();
        assert_eq!(summary.consistency_rate, 1.0);
        assert_eq!(summary.corrected, 0);
    }

    #[test]
    fn disputes_resolve_to_oracle() {
        let rules = TaskRules::default();
        let data = generate_dataset(&rules, 400, 3).unwrap();
        let anns: Vec<_> = (0..3)
            .map(|i| MockAnnotator::new(format!("a{i}"), 0.3, 10 + i).unwrap())
            .collect();
        let mut disputed = 0;
        for r in &data {
            let v = cross_verify(r, &anns, &rules).unwrap();
            assert_eq!(v.annotation(), &oracle_annotate(r, &rules));
            if !v.is_consistent() {
                disputed += 1;
            }
        }
        assert!(disputed > 0);
        assert!(cross_verify(&data[0], &anns[..1], &rules).is_err());
    }

    #[test]
    fn analytic_consistency_hand_value() {
        assert!((analytic_consistency(&[0.05; 3]) - 0.8575).abs() < 1e-12);
        assert_eq!(analytic_consistency(&[0.0; 4]), 1.0);
    }
}
