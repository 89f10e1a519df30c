//! n-gram and subsequence overlap metrics over token sequences.

use std::collections::HashMap;
use std::hash::Hash;

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU-4 with uniform weights and the brevity penalty against the
/// closest reference length (shorter wins ties).
///
/// Unigram precision is unsmoothed; orders 2..=4 use add-one smoothing
/// `(matches + 1) / (candidate n-grams + 1)`, so identical non-empty
/// sequences score exactly 1. An empty candidate scores 0.
pub fn bleu4<T: Eq + Hash>(candidate: &[T], references: &[Vec<T>]) -> f64 {
    if candidate.is_empty() || references.is_empty() {
        return 0.0;
    }
    if references.iter().any(|r| r.as_slice() == candidate) {
        return 1.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand = ngram_counts(candidate, n);
        let mut max_ref: HashMap<&[T], usize> = HashMap::new();
        for r in references {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let total = candidate.len().saturating_sub(n - 1);
        let matched: usize = cand
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if n == 1 {
            matched as f64 / total as f64
        } else {
            (matched as f64 + 1.0) / (total as f64 + 1.0)
        };
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln();
    }
    let c = candidate.len();
    let r = references
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(0);
    let bp = if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    (bp * (log_sum / 4.0).exp()).clamp(0.0, 1.0)
}

fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure (beta = 1) from the longest common subsequence.
pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    if candidate == reference {
        return 1.0;
    }
    let lcs = lcs_len(candidate, reference) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / candidate.len() as f64;
    let r = lcs / reference.len() as f64;
    2.0 * p * r / (p + r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn bleu_identity_and_empty() {
        let a = toks("the dog ate the fire");
        assert_eq!(bleu4(&a, std::slice::from_ref(&a)), 1.0);
        assert_eq!(bleu4(&toks("x"), &[toks("x")]), 1.0);
        assert_eq!(bleu4::<&str>(&[], &[a]), 0.0);
    }

    #[test]
    fn bleu_disjoint_is_zero() {
        assert_eq!(bleu4(&toks("a b c d"), &[toks("w x y z")]), 0.0);
    }

    #[test]
    fn bleu_partial_hand_value() {
        // cand "a b c d", ref "a b x d": p1 = 3/4, p2 = (1+1)/(3+1),
        // p3 = (0+1)/(2+1), p4 = (0+1)/(1+1), bp = 1.
        let got = bleu4(&toks("a b c d"), &[toks("a b x d")]);
        let want = (0.75f64 * 0.5 * (1.0 / 3.0) * 0.5).powf(0.25);
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    }

    #[test]
    fn bleu_brevity_penalty() {
        // cand "a b" vs ref "a b c d": p1 = 1, p2 = 2/2, p3 = 1/1, p4 = 1/1.
        let got = bleu4(&toks("a b"), &[toks("a b c d")]);
        assert!((got - (1.0f64 - 2.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l(&toks("a b c"), &toks("a b c")), 1.0);
        assert!((rouge_l(&toks("a b c"), &toks("a x c")) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rouge_l(&toks("a b"), &toks("c d")), 0.0);
        assert_eq!(rouge_l::<&str>(&[], &toks("c d")), 0.0);
    }

    #[test]
    fn lcs_known() {
        assert_eq!(lcs_len(b"ABCBDAB", b"BDCABA"), 4);
    }
}
