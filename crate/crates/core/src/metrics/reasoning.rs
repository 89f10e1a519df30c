//! Sub-category accuracy and decision alignment of generated reasoning.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{HarmCategory, Judgement, MemeRecord, ParsedResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubAccReport {
    /// Indexed by [`HarmCategory::index`].
    pub per_category: [f64; 5],
    /// Macro mean over the five categories.
    pub overall: f64,
}

impl SubAccReport {
    pub fn get(&self, c: HarmCategory) -> f64 {
        self.per_category[c.index()]
    }
}

/// Per-category fraction of responses whose verdict matches gold
/// membership. `Missing` verdicts count as wrong.
pub fn sub_acc(responses: &[ParsedResponse], gold: &[MemeRecord]) -> Result<SubAccReport> {
    if responses.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: responses.len(),
            right: gold.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::InvalidArgument(
            "sub-acc needs at least one sample".into(),
        ));
    }
    let mut per_category = [0.0; 5];
    for c in HarmCategory::ALL {
        let hits = responses
            .iter()
            .zip(gold)
            .filter(|(r, g)| r.verdict(c).matches(g.subcategories.contains(&c)))
            .count();
        per_category[c.index()] = hits as f64 / gold.len() as f64;
    }
    let overall = per_category.iter().sum::<f64>() / 5.0;
    Ok(SubAccReport {
        per_category,
        overall,
    })
}

/// Fraction of responses whose judgement is harmful exactly when some
/// category is marked applicable. Unparseable judgements are misaligned;
/// an empty slice scores 0.
pub fn decision_alignment(responses: &[ParsedResponse]) -> f64 {
    if responses.is_empty() {
        return 0.0;
    }
    let aligned = responses
        .iter()
        .filter(|r| match r.judgement {
            Judgement::Harmful => r.any_applicable(),
            Judgement::Nonharmful => !r.any_applicable(),
            Judgement::Unparseable => false,
        })
        .count();
    aligned as f64 / responses.len() as f64
}
