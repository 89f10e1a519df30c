//! Domain types shared by every stage of the pipeline.

mod cot;
mod dataset;
mod prompt;
mod split;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cot::{
    detokenize, is_reserved_token, parse_response, serialize_cot, tokenize, Judgement,
    ParsedResponse, ParsedVerdict, JUDGEMENT_PREFIX, RUBRIC, SECTION_HEADERS,
};
pub use dataset::{load_dataset, read_dataset, save_dataset, write_dataset};
pub use prompt::{render_prompt, PromptSpec, TEMPLATES};
pub use split::stratified_split;

/// The five harm subcategories.
///
/// Declaration order is fixed and is the index order used by every
/// per-category vector in rewards and metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HarmCategory {
    Discrimination,
    Offensive,
    Violence,
    Vulgar,
    Antagonism,
}

impl HarmCategory {
    pub const ALL: [HarmCategory; 5] = [
        HarmCategory::Discrimination,
        HarmCategory::Offensive,
        HarmCategory::Violence,
        HarmCategory::Vulgar,
        HarmCategory::Antagonism,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            HarmCategory::Discrimination => "Discrimination",
            HarmCategory::Offensive => "Offensive",
            HarmCategory::Violence => "Violence",
            HarmCategory::Vulgar => "Vulgar",
            HarmCategory::Antagonism => "Antagonism",
        }
    }

    /// Case-insensitive lookup by name.
    pub fn from_name(name: &str) -> Option<HarmCategory> {
        HarmCategory::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for HarmCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HarmCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HarmCategory::from_name(s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown harm category `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryLabel {
    Harmful,
    Nonharmful,
}

impl BinaryLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BinaryLabel::Harmful => "harmful",
            BinaryLabel::Nonharmful => "nonharmful",
        }
    }

    pub fn flipped(self) -> BinaryLabel {
        match self {
            BinaryLabel::Harmful => BinaryLabel::Nonharmful,
            BinaryLabel::Nonharmful => BinaryLabel::Harmful,
        }
    }

    pub fn is_harmful(self) -> bool {
        self == BinaryLabel::Harmful
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    #[default]
    Unassigned,
}

/// Gold per-category verdict of an annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict {
    Applicable { rationale: String },
    NotApplicable,
}

impl Verdict {
    pub fn is_applicable(&self) -> bool {
        matches!(self, Verdict::Applicable { .. })
    }
}

/// Gold four-section chain-of-thought annotation. The QUESTION section is a
/// fixed rubric and is not stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoTAnnotation {
    pub caption: String,
    pub verdicts: BTreeMap<HarmCategory, Verdict>,
    pub judgement: BinaryLabel,
}

impl CoTAnnotation {
    pub fn applicable(&self) -> BTreeSet<HarmCategory> {
        self.verdicts
            .iter()
            .filter(|(_, v)| v.is_applicable())
            .map(|(c, _)| *c)
            .collect()
    }

    /// Checks the structural invariants and that free text fields cannot be
    /// mistaken for document structure once serialized.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for c in HarmCategory::ALL {
            if !self.verdicts.contains_key(&c) {
                return Err(format!("missing verdict for {c}"));
            }
        }
        let any_applicable = self.verdicts.values().any(Verdict::is_applicable);
        if any_applicable != self.judgement.is_harmful() {
            return Err(format!(
                "judgement `{}` contradicts the per-category verdicts",
                self.judgement
            ));
        }
        check_free_text("caption", &self.caption)?;
        for (c, v) in &self.verdicts {
            if let Verdict::Applicable { rationale } = v {
                check_free_text(&format!("rationale for {c}"), rationale)?;
            }
        }
        Ok(())
    }
}

fn check_free_text(what: &str, text: &str) -> std::result::Result<(), String> {
    let tokens = tokenize(text);
    if let Some(t) = tokens.iter().find(|t| is_reserved_token(t)) {
        return Err(format!("{what} contains reserved token `{t}`"));
    }
    let lowered: Vec<String> = tokens.iter().map(|t| t.to_ascii_lowercase()).collect();
    if lowered
        .windows(JUDGEMENT_PREFIX.len())
        .any(|w| w.iter().zip(JUDGEMENT_PREFIX).all(|(a, b)| a == b))
    {
        return Err(format!("{what} contains the judgement sentence"));
    }
    Ok(())
}

/// One meme sample. Images are represented by symbolic tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemeRecord {
    pub id: String,
    pub image_tokens: Vec<String>,
    pub text: String,
    pub label: BinaryLabel,
    pub subcategories: BTreeSet<HarmCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cot: Option<CoTAnnotation>,
    #[serde(default)]
    pub split: Split,
}

impl MemeRecord {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidRecord {
            id: self.id.clone(),
            reason,
        };
        if self.label == BinaryLabel::Nonharmful && !self.subcategories.is_empty() {
            return Err(fail("nonharmful record lists harm subcategories".into()));
        }
        if let Some(cot) = &self.cot {
            if cot.judgement != self.label {
                return Err(fail(format!(
                    "annotation judgement `{}` differs from label `{}`",
                    cot.judgement, self.label
                )));
            }
            cot.validate().map_err(fail)?;
        }
        Ok(())
    }

    pub fn has_cot(&self) -> bool {
        self.cot.is_some()
    }
}

/// Validates every record and checks id uniqueness.
pub fn validate_dataset(records: &[MemeRecord]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for r in records {
        r.validate()?;
        if !seen.insert(r.id.as_str()) {
            return Err(Error::InvalidRecord {
                id: r.id.clone(),
                reason: "duplicate id".into(),
            });
        }
    }
    Ok(())
}
