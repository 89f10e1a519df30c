//! Scalar evaluation quantities. Every function here is pure.

mod classification;
mod embedding;
mod kappa;
mod reasoning;
mod text;

use serde::{Deserialize, Serialize};

pub use classification::{
    classification_report, confusion_counts, ClassMetrics, ClassificationReport, ConfusionCounts,
};
pub use embedding::{emb_similarity, EmbeddingProvider, HashEmbedder, OneHotEmbedder};
pub use kappa::{fleiss_kappa, KappaReport};
pub use reasoning::{decision_alignment, sub_acc, SubAccReport};
pub use text::{bleu4, rouge_l};

/// Relative weights of BLEU-4, ROUGE-L and embedding similarity in the
/// combined caption similarity. Normalised by their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityWeights(pub [f64; 3]);

impl Default for SimilarityWeights {
    fn default() -> Self {
        SimilarityWeights([1.0, 1.0, 1.0])
    }
}

impl SimilarityWeights {
    pub fn validate(&self) -> crate::Result<()> {
        let ok =
            self.0.iter().all(|w| w.is_finite() && *w >= 0.0) && self.0.iter().sum::<f64>() > 0.0;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Config(format!(
                "similarity weights must be non-negative with a positive sum, got {:?}",
                self.0
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimilarityScores {
    pub bleu4: f64,
    pub rouge_l: f64,
    pub emb_sim: f64,
    pub combined: f64,
}

impl SimilarityScores {
    pub fn new(bleu4: f64, rouge_l: f64, emb_sim: f64, weights: &SimilarityWeights) -> Self {
        let [a, b, c] = weights.0;
        let combined = (a * bleu4 + b * rouge_l + c * emb_sim) / (a + b + c);
        SimilarityScores {
            bleu4,
            rouge_l,
            emb_sim,
            combined,
        }
    }
}

/// All three caption similarity metrics between a candidate and a reference
/// token sequence.
pub fn similarity<S: AsRef<str>>(
    candidate: &[S],
    reference: &[S],
    embedder: &dyn EmbeddingProvider,
    weights: &SimilarityWeights,
) -> SimilarityScores {
    let cand: Vec<&str> = candidate.iter().map(AsRef::as_ref).collect();
    let refr: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    SimilarityScores::new(
        bleu4(&cand, std::slice::from_ref(&refr)),
        rouge_l(&cand, &refr),
        emb_similarity(&cand, &refr, embedder),
        weights,
    )
}
