//! Greedy-matching embedding similarity over token sequences.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Maps tokens to vectors. Implementations must be total over their
/// vocabulary and read-only after construction.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, token: &str) -> Vec<f64>;
}

/// Deterministic pseudo-random unit vectors seeded by a stable token hash.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: 64, seed: 0 }
    }
}

/// 64-bit FNV-1a.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl EmbeddingProvider for HashEmbedder {
    fn embed(&self, token: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()) ^ self.seed);
        let mut v: Vec<f64> = (0..self.dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

/// Orthonormal basis vectors, one per listed token; anything else maps to
/// the zero vector.
#[derive(Debug, Clone, Default)]
pub struct OneHotEmbedder {
    index: HashMap<String, usize>,
}

impl OneHotEmbedder {
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut index = HashMap::new();
        for t in tokens {
            let next = index.len();
            index.entry(t.into()).or_insert(next);
        }
        OneHotEmbedder { index }
    }
}

impl EmbeddingProvider for OneHotEmbedder {
    fn embed(&self, token: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.index.len()];
        if let Some(&i) = self.index.get(token) {
            v[i] = 1.0;
        }
        v
    }
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Greedy-matching F-score in [0, 1].
///
/// Every candidate token is matched to its most similar reference token
/// (precision) and vice versa (recall). Both means are mapped from cosine
/// range [-1, 1] to [0, 1] before taking the harmonic mean. Equal tokens
/// have cosine exactly 1. Empty input scores 0.
pub fn emb_similarity<S: AsRef<str>>(
    candidate: &[S],
    reference: &[S],
    embedder: &dyn EmbeddingProvider,
) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let cv: Vec<Vec<f64>> = candidate
        .iter()
        .map(|t| embedder.embed(t.as_ref()))
        .collect();
    let rv: Vec<Vec<f64>> = reference
        .iter()
        .map(|t| embedder.embed(t.as_ref()))
        .collect();
    let mut sim = vec![vec![0.0; reference.len()]; candidate.len()];
    for (i, c) in candidate.iter().enumerate() {
        for (j, r) in reference.iter().enumerate() {
            sim[i][j] = if c.as_ref() == r.as_ref() {
                1.0
            } else {
                cosine(&cv[i], &rv[j])
            };
        }
    }
    let precision = sim
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / candidate.len() as f64;
    let recall = (0..reference.len())
        .map(|j| {
            sim.iter()
                .map(|row| row[j])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum::<f64>()
        / reference.len() as f64;
    let p = (precision + 1.0) / 2.0;
    let r = (recall + 1.0) / 2.0;
    if p + r == 0.0 {
        0.0
    } else {
        (2.0 * p * r / (p + r)).clamp(0.0, 1.0)
    }
}
