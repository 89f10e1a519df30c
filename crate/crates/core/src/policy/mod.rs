//! A desk-scale autoregressive policy with exact, hand-written gradients.
//!
//! Next-token distribution at step `t`:
//!
//! ```text
//! ctx    = [mean(emb(prompt)), emb(y[t-k]), ..., emb(y[t-1])]   (BOS-padded)
//! hidden = tanh(W1 ctx + b1)
//! logits = W2 hidden + b2
//! ```
//!
//! The context depends only on the prompt and the previous `k` tokens, so
//! the log-probability of a sequence is a sum of independent per-position
//! terms and every loss here is a weighted sum of such terms.

mod checkpoint;
mod optim;
mod sft;
mod vocab;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{BinaryLabel, PromptSpec};

pub use checkpoint::{Checkpoint, StageTag, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use optim::Adam;
pub use sft::{SftExample, SftLosses, TrainStats};
pub use vocab::{structural_tokens, Vocab, BOS, EOS};

/// Response tokens preceding the judgement word; with the default context
/// window these are exactly the tokens a full document places there.
pub const JUDGEMENT_CONTEXT: [&str; 6] = [".", "JUDGEMENT:", "The", "image's", "label", "is"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    /// Number of previous response tokens in the context window.
    pub context: usize,
}

impl PolicyDims {
    pub fn ctx_len(&self) -> usize {
        self.embed * (self.context + 1)
    }

    pub fn param_count(&self) -> usize {
        let Layout { total, .. } = self.layout();
        total
    }

    fn layout(&self) -> Layout {
        let emb = 0;
        let w1 = emb + self.vocab * self.embed;
        let b1 = w1 + self.hidden * self.ctx_len();
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.vocab * self.hidden;
        Layout {
            emb,
            w1,
            b1,
            w2,
            b2,
            total: b2 + self.vocab,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    emb: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    total: usize,
}

/// Architecture hyperparameters other than the vocabulary size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed: usize,
    pub hidden: usize,
    pub context: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed: 16,
            hidden: 32,
            context: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decoding {
    Greedy,
    Sample { temperature: f64 },
}

/// A sampled continuation and its log-probability under the sampling
/// policy (temperature 1), excluding any forced prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTokens {
    pub ids: Vec<u32>,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    dims: PolicyDims,
    vocab: Vocab,
    params: Vec<f64>,
}

/// Scratch buffers for one position.
struct Scratch {
    ctx: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
    dhidden: Vec<f64>,
}

impl Scratch {
    fn new(dims: &PolicyDims) -> Self {
        Scratch {
            ctx: vec![0.0; dims.ctx_len()],
            hidden: vec![0.0; dims.hidden],
            logits: vec![0.0; dims.vocab],
            dhidden: vec![0.0; dims.hidden],
        }
    }
}

fn log_softmax_at(logits: &[f64], y: usize) -> (f64, f64) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let lse = max + sum.ln();
    (logits[y] - lse, lse)
}

impl Policy {
    /// Small seeded pseudo-random weights, zero biases.
    pub fn init(vocab: Vocab, model: ModelConfig, seed: u64) -> Self {
        let dims = PolicyDims {
            vocab: vocab.len(),
            embed: model.embed,
            hidden: model.hidden,
            context: model.context,
        };
        let l = dims.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; l.total];
        let mut fill = |range: std::ops::Range<usize>, scale: f64| {
            for p in &mut params[range] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *p = z * scale;
            }
        };
        fill(l.emb..l.w1, 0.5);
        fill(l.w1..l.b1, 1.0 / (dims.ctx_len() as f64).sqrt());
        fill(l.w2..l.b2, 1.0 / (dims.hidden as f64).sqrt());
        Policy {
            dims,
            vocab,
            params,
        }
    }

    pub fn zeros(vocab: Vocab, model: ModelConfig) -> Self {
        let mut p = Policy::init(vocab, model, 0);
        p.params.iter_mut().for_each(|x| *x = 0.0);
        p
    }

    pub fn from_parts(vocab: Vocab, dims: PolicyDims, params: Vec<f64>) -> Result<Self> {
        if dims.vocab != vocab.len() {
            return Err(Error::Checkpoint(format!(
                "vocabulary has {} tokens but dims declare {}",
                vocab.len(),
                dims.vocab
            )));
        }
        if params.len() != dims.param_count() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters for {:?}, found {}",
                dims.param_count(),
                dims,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(Policy {
            dims,
            vocab,
            params,
        })
    }

    pub fn dims(&self) -> PolicyDims {
        self.dims
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn encode_prompt(&self, prompt: &PromptSpec) -> Result<Vec<u32>> {
        if prompt.rendered_tokens.is_empty() {
            return Err(Error::InvalidArgument("empty prompt".into()));
        }
        self.vocab.encode(&prompt.rendered_tokens)
    }

    fn pooled(&self, prompt: &[u32]) -> Vec<f64> {
        let d = self.dims.embed;
        let mut pooled = vec![0.0; d];
        for &id in prompt {
            let row = &self.params[id as usize * d..(id as usize + 1) * d];
            for (p, e) in pooled.iter_mut().zip(row) {
                *p += e;
            }
        }
        let n = prompt.len().max(1) as f64;
        pooled.iter_mut().for_each(|p| *p /= n);
        pooled
    }

    /// Token id at window slot `s` (0 = oldest) for position `t`.
    fn window_id(&self, prefix: &[u32], t: usize, s: usize) -> u32 {
        let k = self.dims.context;
        // slot s holds y[t - k + s]
        match (t + s).checked_sub(k) {
            Some(i) => prefix[i],
            None => self.vocab.bos(),
        }
    }

    /// Fills ctx/hidden/logits for the position after `prefix[..t]`.
    fn forward(&self, pooled: &[f64], prefix: &[u32], t: usize, s: &mut Scratch) {
        let PolicyDims {
            vocab,
            embed: d,
            hidden: h,
            context: k,
        } = self.dims;
        let l = self.dims.layout();
        let c = self.dims.ctx_len();
        s.ctx[..d].copy_from_slice(pooled);
        for slot in 0..k {
            let id = self.window_id(prefix, t, slot) as usize;
            s.ctx[d * (slot + 1)..d * (slot + 2)]
                .copy_from_slice(&self.params[l.emb + id * d..l.emb + (id + 1) * d]);
        }
        for j in 0..h {
            let row = &self.params[l.w1 + j * c..l.w1 + (j + 1) * c];
            let pre: f64 =
                row.iter().zip(&s.ctx).map(|(w, x)| w * x).sum::<f64>() + self.params[l.b1 + j];
            s.hidden[j] = pre.tanh();
        }
        for v in 0..vocab {
            let row = &self.params[l.w2 + v * h..l.w2 + (v + 1) * h];
            s.logits[v] =
                row.iter().zip(&s.hidden).map(|(w, x)| w * x).sum::<f64>() + self.params[l.b2 + v];
        }
    }

    /// Next-token log-probabilities after `prefix`.
    pub fn next_logprobs(&self, prompt: &[u32], prefix: &[u32]) -> Vec<f64> {
        let mut s = Scratch::new(&self.dims);
        let pooled = self.pooled(prompt);
        self.forward(&pooled, prefix, prefix.len(), &mut s);
        let (_, lse) = log_softmax_at(&s.logits, 0);
        s.logits.iter().map(|l| l - lse).collect()
    }

    /// `sum_t weights[t] * log p(tokens[t] | prompt, tokens[..t])`;
    /// positions with zero weight are skipped.
    pub fn weighted_logprob(&self, prompt: &[u32], tokens: &[u32], weights: &[f64]) -> f64 {
        debug_assert_eq!(tokens.len(), weights.len());
        let mut s = Scratch::new(&self.dims);
        let pooled = self.pooled(prompt);
        let mut total = 0.0;
        for (t, (&y, &w)) in tokens.iter().zip(weights).enumerate() {
            if w == 0.0 {
                continue;
            }
            self.forward(&pooled, tokens, t, &mut s);
            total += w * log_softmax_at(&s.logits, y as usize).0;
        }
        total
    }

    /// Like [`Policy::weighted_logprob`], additionally accumulating the
    /// gradient with respect to the flat parameter vector into `grad`.
    pub fn weighted_logprob_grad(
        &self,
        prompt: &[u32],
        tokens: &[u32],
        weights: &[f64],
        grad: &mut [f64],
    ) -> f64 {
        debug_assert_eq!(tokens.len(), weights.len());
        debug_assert_eq!(grad.len(), self.params.len());
        let PolicyDims {
            vocab,
            embed: d,
            hidden: h,
            context: k,
        } = self.dims;
        let l = self.dims.layout();
        let c = self.dims.ctx_len();
        let mut s = Scratch::new(&self.dims);
        let pooled = self.pooled(prompt);
        let mut dpooled = vec![0.0; d];
        let mut dctx = vec![0.0; c];
        let mut total = 0.0;
        for (t, (&y, &w)) in tokens.iter().zip(weights).enumerate() {
            if w == 0.0 {
                continue;
            }
            self.forward(&pooled, tokens, t, &mut s);
            let (lp, lse) = log_softmax_at(&s.logits, y as usize);
            total += w * lp;

            // dlogits = w * (onehot(y) - softmax), reusing the logits buffer.
            for v in 0..vocab {
                s.logits[v] = -w * (s.logits[v] - lse).exp();
            }
            s.logits[y as usize] += w;

            s.dhidden.iter_mut().for_each(|x| *x = 0.0);
            for v in 0..vocab {
                let g = s.logits[v];
                grad[l.b2 + v] += g;
                let base = l.w2 + v * h;
                for j in 0..h {
                    grad[base + j] += g * s.hidden[j];
                    s.dhidden[j] += self.params[base + j] * g;
                }
            }
            dctx.iter_mut().for_each(|x| *x = 0.0);
            for j in 0..h {
                let dpre = s.dhidden[j] * (1.0 - s.hidden[j] * s.hidden[j]);
                if dpre == 0.0 {
                    continue;
                }
                grad[l.b1 + j] += dpre;
                let base = l.w1 + j * c;
                for i in 0..c {
                    grad[base + i] += dpre * s.ctx[i];
                    dctx[i] += self.params[base + i] * dpre;
                }
            }
            for (dp, dc) in dpooled.iter_mut().zip(&dctx[..d]) {
                *dp += dc;
            }
            for slot in 0..k {
                let id = self.window_id(tokens, t, slot) as usize;
                let row = &mut grad[l.emb + id * d..l.emb + (id + 1) * d];
                for (g, dc) in row.iter_mut().zip(&dctx[d * (slot + 1)..d * (slot + 2)]) {
                    *g += dc;
                }
            }
        }
        let n = prompt.len().max(1) as f64;
        for &id in prompt {
            let row = &mut grad[l.emb + id as usize * d..l.emb + (id as usize + 1) * d];
            for (g, dp) in row.iter_mut().zip(&dpooled) {
                *g += dp / n;
            }
        }
        total
    }

    /// Autoregressive decoding after an optional forced prefix, until EOS or
    /// `max_len` generated tokens. Deterministic given `seed`.
    pub fn sample_ids(
        &self,
        prompt: &[u32],
        forced_prefix: &[u32],
        max_len: usize,
        decoding: Decoding,
        seed: u64,
    ) -> SampledTokens {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Scratch::new(&self.dims);
        let pooled = self.pooled(prompt);
        let mut seq = forced_prefix.to_vec();
        let mut logprob = 0.0;
        let eos = self.vocab.eos();
        let mut probs = vec![0.0; self.dims.vocab];
        for _ in 0..max_len {
            self.forward(&pooled, &seq, seq.len(), &mut s);
            let next = match decoding {
                Decoding::Greedy => argmax(&s.logits),
                Decoding::Sample { temperature } => {
                    let max = s.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut z = 0.0;
                    for (p, l) in probs.iter_mut().zip(&s.logits) {
                        *p = ((l - max) / temperature).exp();
                        z += *p;
                    }
                    let mut u: f64 = rng.random::<f64>() * z;
                    let mut pick = probs.len() - 1;
                    for (i, p) in probs.iter().enumerate() {
                        if u < *p {
                            pick = i;
                            break;
                        }
                        u -= p;
                    }
                    pick as u32
                }
            };
            logprob += log_softmax_at(&s.logits, next as usize).0;
            seq.push(next);
            if next == eos {
                break;
            }
        }
        SampledTokens {
            ids: seq.split_off(forced_prefix.len()),
            logprob,
        }
    }

    pub fn logprob_sequence<S: AsRef<str>>(
        &self,
        prompt: &PromptSpec,
        tokens: &[S],
    ) -> Result<f64> {
        let p = self.encode_prompt(prompt)?;
        let ids = self.vocab.encode(tokens)?;
        Ok(self.weighted_logprob(&p, &ids, &vec![1.0; ids.len()]))
    }

    pub fn sample_response(
        &self,
        prompt: &PromptSpec,
        max_len: usize,
        decoding: Decoding,
        seed: u64,
    ) -> Result<(Vec<String>, f64)> {
        if max_len == 0 {
            return Err(Error::InvalidArgument("max_len must be at least 1".into()));
        }
        if let Decoding::Sample { temperature } = decoding {
            if !(temperature > 0.0 && temperature.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "temperature must be positive, got {temperature}"
                )));
            }
        }
        let p = self.encode_prompt(prompt)?;
        let out = self.sample_ids(&p, &[], max_len, decoding, seed);
        Ok((self.vocab.decode(&out.ids), out.logprob))
    }

    /// Negated weighted log-probability, accumulating its gradient into `grad`.
    fn neg_logprob_grad(
        &self,
        prompt: &[u32],
        tokens: &[u32],
        weights: &[f64],
        grad: &mut [f64],
    ) -> f64 {
        let mut g = vec![0.0; grad.len()];
        let value = self.weighted_logprob_grad(prompt, tokens, weights, &mut g);
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc -= gi;
        }
        -value
    }

    /// Mean per-token negative log-likelihood of a gold sequence.
    pub fn loss_cot<S: AsRef<str>>(&self, prompt: &PromptSpec, gold: &[S]) -> Result<f64> {
        let (p, ids, w) = self.cot_terms(prompt, gold)?;
        Ok(-self.weighted_logprob(&p, &ids, &w))
    }

    pub fn loss_cot_grad<S: AsRef<str>>(
        &self,
        prompt: &PromptSpec,
        gold: &[S],
        grad: &mut [f64],
    ) -> Result<f64> {
        let (p, ids, w) = self.cot_terms(prompt, gold)?;
        Ok(self.neg_logprob_grad(&p, &ids, &w, grad))
    }

    fn cot_terms<S: AsRef<str>>(
        &self,
        prompt: &PromptSpec,
        gold: &[S],
    ) -> Result<(Vec<u32>, Vec<u32>, Vec<f64>)> {
        if gold.is_empty() {
            return Err(Error::InvalidArgument("empty gold sequence".into()));
        }
        let p = self.encode_prompt(prompt)?;
        let ids = self.vocab.encode(gold)?;
        let w = vec![1.0 / ids.len() as f64; ids.len()];
        Ok((p, ids, w))
    }

    /// Cross-entropy of the gold judgement word at the judgement slot of a
    /// full document.
    pub fn loss_cls(&self, prompt: &PromptSpec, gold: BinaryLabel) -> Result<f64> {
        let (p, ids, w) = self.cls_terms(prompt, gold)?;
        Ok(-self.weighted_logprob(&p, &ids, &w))
    }

    pub fn loss_cls_grad(
        &self,
        prompt: &PromptSpec,
        gold: BinaryLabel,
        grad: &mut [f64],
    ) -> Result<f64> {
        let (p, ids, w) = self.cls_terms(prompt, gold)?;
        Ok(self.neg_logprob_grad(&p, &ids, &w, grad))
    }

    fn cls_terms(
        &self,
        prompt: &PromptSpec,
        gold: BinaryLabel,
    ) -> Result<(Vec<u32>, Vec<u32>, Vec<f64>)> {
        let p = self.encode_prompt(prompt)?;
        let mut ids = self.vocab.encode(&JUDGEMENT_CONTEXT)?;
        ids.push(self.vocab.id(gold.as_str())?);
        let mut w = vec![0.0; ids.len()];
        *w.last_mut().unwrap() = 1.0;
        Ok((p, ids, w))
    }
}

fn argmax(xs: &[f64]) -> u32 {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{serialize_cot, tokenize};

    fn vocab() -> Vocab {
        Vocab::with_content(["dog", "fire", "hate", "them"])
    }

    fn prompt(tokens: &[&str]) -> PromptSpec {
        PromptSpec {
            template_id: "default".into(),
            rendered_tokens: tokens.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn zero_policy_is_uniform() {
        let pol = Policy::zeros(vocab(), ModelConfig::default());
        let v = pol.dims().vocab as f64;
        let pr = prompt(&["<task>", "dog"]);
        let seq = ["dog", "fire", ".", "The"];
        let lp = pol.logprob_sequence(&pr, &seq).unwrap();
        assert!((lp + 4.0 * v.ln()).abs() < 1e-12);
        assert!((pol.loss_cot(&pr, &seq).unwrap() - v.ln()).abs() < 1e-12);
        assert!((pol.loss_cls(&pr, BinaryLabel::Harmful).unwrap() - v.ln()).abs() < 1e-12);
        assert_eq!(pol.logprob_sequence::<&str>(&pr, &[]).unwrap(), 0.0);
    }

    #[test]
    fn zero_policy_with_sixteen_tokens() {
        // A vocabulary of exactly 16 tokens: loss is ln 16 for any target.
        let mut toks: Vec<String> = vec![BOS.into(), EOS.into()];
        toks.extend((2..16).map(|i| format!("w{i}")));
        let v = Vocab::from(toks.clone());
        assert_eq!(v.len(), 16);
        let pol = Policy::zeros(v, ModelConfig::default());
        let pr = PromptSpec {
            template_id: "t".into(),
            rendered_tokens: vec!["w3".into()],
        };
        let loss = pol.loss_cot(&pr, &toks[2..9]).unwrap();
        assert!((loss - 16f64.ln()).abs() < 1e-12);
        assert!((16f64.ln() - 2.7726).abs() < 1e-4);
    }

    #[test]
    fn softmax_normalises() {
        let pol = Policy::init(vocab(), ModelConfig::default(), 3);
        let p = pol.vocab().encode(&["<task>", "dog", "hate"]).unwrap();
        for prefix_len in 0..8 {
            let prefix: Vec<u32> = (0..prefix_len as u32).collect();
            let lp = pol.next_logprobs(&p, &prefix);
            let total: f64 = lp.iter().map(|x| x.exp()).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn logprob_decomposes_per_step() {
        let pol = Policy::init(vocab(), ModelConfig::default(), 5);
        let pr = prompt(&["<task>", "fire", "them"]);
        let p = pol.encode_prompt(&pr).unwrap();
        let seq = tokenize("CAPTION: dog fire hate them . REASONING: Vulgar: Not applicable .");
        let ids = pol.vocab().encode(&seq).unwrap();
        let direct: f64 = (0..ids.len())
            .map(|t| pol.next_logprobs(&p, &ids[..t])[ids[t] as usize])
            .sum();
        let whole = pol.logprob_sequence(&pr, &seq).unwrap();
        assert!((direct - whole).abs() < 1e-10);
        assert!(whole <= 0.0);
    }

    #[test]
    fn out_of_vocabulary_is_error() {
        let pol = Policy::init(vocab(), ModelConfig::default(), 0);
        assert!(matches!(
            pol.logprob_sequence(&prompt(&["<task>"]), &["zebra"]),
            Err(Error::OutOfVocabulary(_))
        ));
        assert!(pol.loss_cot::<&str>(&prompt(&["<task>"]), &[]).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_self_consistent() {
        let pol = Policy::init(vocab(), ModelConfig::default(), 11);
        let pr = prompt(&["<task>", "dog", "them"]);
        let a = pol
            .sample_response(&pr, 20, Decoding::Sample { temperature: 1.0 }, 42)
            .unwrap();
        let b = pol
            .sample_response(&pr, 20, Decoding::Sample { temperature: 1.0 }, 42)
            .unwrap();
        assert_eq!(a, b);
        let recomputed = pol.logprob_sequence(&pr, &a.0).unwrap();
        assert!((a.1 - recomputed).abs() < 1e-10);
        assert!(!a.0.is_empty() && a.0.len() <= 20);
    }

    #[test]
    fn greedy_picks_argmax_each_step() {
        let pol = Policy::init(vocab(), ModelConfig::default(), 2);
        let pr = prompt(&["<task>", "hate"]);
        let (toks, _) = pol.sample_response(&pr, 10, Decoding::Greedy, 0).unwrap();
        let p = pol.encode_prompt(&pr).unwrap();
        let ids = pol.vocab().encode(&toks).unwrap();
        for t in 0..ids.len() {
            let lp = pol.next_logprobs(&p, &ids[..t]);
            assert_eq!(ids[t], argmax(&lp));
        }
    }

    #[test]
    fn output_bias_shift_keeps_greedy_sequence() {
        let mut pol = Policy::init(vocab(), ModelConfig::default(), 9);
        let pr = prompt(&["<task>", "dog", "fire"]);
        let (before, _) = pol.sample_response(&pr, 15, Decoding::Greedy, 0).unwrap();
        let l = pol.dims().layout();
        for b in &mut pol.params_mut()[l.b2..l.total] {
            *b += 3.25;
        }
        let (after, _) = pol.sample_response(&pr, 15, Decoding::Greedy, 0).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn confident_policy_has_zero_loss() {
        // Make the output layer put (numerically) all mass on one token.
        let mut pol = Policy::zeros(vocab(), ModelConfig::default());
        let l = pol.dims().layout();
        let harmful = pol.vocab().id("harmful").unwrap() as usize;
        pol.params_mut()[l.b2 + harmful] = 800.0;
        let pr = prompt(&["<task>"]);
        assert_eq!(pol.loss_cls(&pr, BinaryLabel::Harmful).unwrap(), 0.0);
        assert_eq!(pol.loss_cot(&pr, &["harmful", "harmful"]).unwrap(), 0.0);
    }

    #[test]
    fn judgement_context_matches_document_tail() {
        let ann = crate::schema::CoTAnnotation {
            caption: "dog".into(),
            verdicts: crate::schema::HarmCategory::ALL
                .into_iter()
                .map(|c| (c, crate::schema::Verdict::NotApplicable))
                .collect(),
            judgement: BinaryLabel::Nonharmful,
        };
        let toks = tokenize(&serialize_cot(&ann));
        let pos = toks.iter().position(|t| t == "nonharmful").unwrap();
        assert_eq!(&toks[pos - JUDGEMENT_CONTEXT.len()..pos], JUDGEMENT_CONTEXT);
    }
}
