//! Word-level autoregressive language model with hand-written backprop.
//!
//! Each next-token distribution is conditioned on the embeddings of the last
//! `context` tokens plus the mean embedding of the whole prefix, passed
//! through one tanh hidden layer and a softmax output layer.
//!
//! Parameter groups, ordered output-adjacent first: `[W2, b2]`, `[W1, b1]`,
//! `[E]`.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{axpy, log_softmax, sgd, Adam, Matrix, OptimizerKind};
use crate::datamodel::{tokenize, TokenId};

pub const UNK: &str = "<unk>";

/// Closed word vocabulary. Reserved tokens come first, then corpus words in
/// sorted order so ids are reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Self { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// `reserved` tokens (plus [`UNK`]) followed by every word of `texts`.
    pub fn build<'a, I>(reserved: &[&str], texts: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut tokens: Vec<String> = Vec::new();
        for r in reserved.iter().copied().chain([UNK]) {
            if !tokens.iter().any(|t| t == r) {
                tokens.push(r.to_string());
            }
        }
        let words: BTreeSet<&str> = texts
            .into_iter()
            .flat_map(|t| t.split_whitespace())
            .filter(|chunk| !reserved.contains(chunk))
            .flat_map(tokenize)
            .collect();
        tokens.extend(
            words
                .into_iter()
                .filter(|w| !reserved.contains(w) && *w != UNK)
                .map(String::from),
        );
        tokens.into()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn unk(&self) -> TokenId {
        self.index[UNK]
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Whitespace chunks equal to a known token map directly (this keeps
    /// reserved separators intact); other chunks are split with the shared
    /// punctuation-aware tokenizer. Unknown words map to [`UNK`].
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        for chunk in text.split_whitespace() {
            if let Some(id) = self.id(chunk) {
                out.push(id);
                continue;
            }
            for word in tokenize(chunk) {
                out.push(self.id(word).unwrap_or_else(|| self.unk()));
            }
        }
        out
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter().map(|&i| self.token(i)).collect::<Vec<_>>().join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmConfig {
    pub embed_dim: usize,
    pub context: usize,
    pub hidden: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            embed_dim: 24,
            context: 3,
            hidden: 96,
        }
    }
}

impl LmConfig {
    fn input_dim(&self) -> usize {
        (self.context + 1) * self.embed_dim
    }
}

const GROUPS: usize = 3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TinyLm {
    config: LmConfig,
    vocab: Vocabulary,
    embed: Matrix,
    w1: Matrix,
    b1: Vec<f32>,
    w2: Matrix,
    b2: Vec<f32>,
    trainable: usize,
    #[serde(skip)]
    adam: Adam,
}

/// One training sequence: log-likelihood of `tokens[from..]` weighted per
/// position by `weights` (`weights.len() == tokens.len() - from`).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTokens<'a> {
    pub tokens: &'a [TokenId],
    pub from: usize,
    pub weights: &'a [f64],
}

struct Grads {
    embed: Option<Matrix>,
    w1: Option<Matrix>,
    b1: Vec<f32>,
    w2: Matrix,
    b2: Vec<f32>,
}

impl TinyLm {
    pub fn new<R: Rng + ?Sized>(vocab: Vocabulary, config: LmConfig, rng: &mut R) -> Self {
        let v = vocab.len();
        let input = config.input_dim();
        Self {
            embed: Matrix::random(v, config.embed_dim, 0.3, rng),
            w1: Matrix::random(config.hidden, input, 1.0 / (input as f32).sqrt(), rng),
            b1: vec![0.0; config.hidden],
            w2: Matrix::random(v, config.hidden, 0.5 / (config.hidden as f32).sqrt(), rng),
            b2: vec![0.0; v],
            config,
            vocab,
            trainable: GROUPS,
            adam: Adam::new(),
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn config(&self) -> &LmConfig {
        &self.config
    }

    pub fn parameter_count(&self) -> usize {
        self.embed.data.len() + self.w1.data.len() + self.b1.len() + self.w2.data.len() + self.b2.len()
    }

    pub fn group_count(&self) -> usize {
        GROUPS
    }

    pub fn trainable_groups(&self) -> usize {
        self.trainable
    }

    pub fn set_trainable_groups(&mut self, n: usize) {
        self.trainable = n.min(GROUPS);
    }

    /// Flattened parameters of group `g` (0 = output-adjacent).
    pub fn group_parameters(&self, g: usize) -> Vec<f32> {
        match g {
            0 => [&self.w2.data[..], &self.b2].concat(),
            1 => [&self.w1.data[..], &self.b1].concat(),
            _ => self.embed.data.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.embed.is_finite()
            && self.w1.is_finite()
            && self.w2.is_finite()
            && self.b1.iter().chain(&self.b2).all(|v| v.is_finite())
    }

    /// Drops optimizer moments, e.g. after restoring a snapshot.
    pub fn reset_optimizer(&mut self) {
        self.adam = Adam::new();
    }

    /// Network input for predicting the token after `prefix`.
    fn input(&self, prefix: &[TokenId], mean: &[f32], x: &mut [f32]) {
        let d = self.config.embed_dim;
        x.fill(0.0);
        for k in 0..self.config.context {
            if let Some(pos) = prefix.len().checked_sub(k + 1) {
                x[k * d..(k + 1) * d].copy_from_slice(self.embed.row(prefix[pos] as usize));
            }
        }
        x[self.config.context * d..].copy_from_slice(mean);
    }

    fn hidden(&self, x: &[f32]) -> Vec<f32> {
        let mut h = vec![0.0; self.config.hidden];
        self.w1.affine(x, &self.b1, &mut h);
        for v in &mut h {
            *v = v.tanh();
        }
        h
    }

    fn logits(&self, h: &[f32]) -> Vec<f32> {
        let mut out = vec![0.0; self.vocab.len()];
        self.w2.affine(h, &self.b2, &mut out);
        out
    }

    /// Running state for incremental decoding.
    pub fn start(&self, prompt: &[TokenId]) -> Decoder {
        let mut dec = Decoder {
            tokens: Vec::with_capacity(prompt.len() + 64),
            sum: vec![0.0; self.config.embed_dim],
        };
        for &t in prompt {
            dec.push(self, t);
        }
        dec
    }

    /// Log-probabilities of the next token after the decoder's prefix.
    pub fn next_logprobs(&self, dec: &Decoder) -> Vec<f64> {
        let mut x = vec![0.0; self.config.input_dim()];
        let mean = dec.mean();
        self.input(&dec.tokens, &mean, &mut x);
        log_softmax(&self.logits(&self.hidden(&x)))
    }

    /// `log p(tokens[t] | tokens[..t])` for `t` in `from..tokens.len()`.
    pub fn logprobs(&self, tokens: &[TokenId], from: usize) -> Vec<f64> {
        assert!(from >= 1, "the first token has no context");
        let mut dec = self.start(&tokens[..from]);
        let mut out = Vec::with_capacity(tokens.len().saturating_sub(from));
        for &t in &tokens[from..] {
            out.push(self.next_logprobs(&dec)[t as usize]);
            dec.push(self, t);
        }
        out
    }

    /// Mean negative log-likelihood of `tokens[from..]`.
    pub fn mean_nll(&self, tokens: &[TokenId], from: usize) -> f64 {
        let lp = self.logprobs(tokens, from);
        if lp.is_empty() {
            return 0.0;
        }
        -lp.iter().sum::<f64>() / lp.len() as f64
    }

    /// Gradient of `sum_seq sum_t w_t log p(tokens[t] | prefix)` with respect
    /// to the trainable groups, plus the objective value.
    fn gradient(&self, batch: &[WeightedTokens<'_>]) -> (Grads, f64) {
        let cfg = self.config;
        let (v, d, h_dim, input) = (self.vocab.len(), cfg.embed_dim, cfg.hidden, cfg.input_dim());
        let need_w1 = self.trainable >= 2;
        let need_embed = self.trainable >= 3;
        let mut g = Grads {
            embed: need_embed.then(|| Matrix::zeros(v, d)),
            w1: need_w1.then(|| Matrix::zeros(h_dim, input)),
            b1: vec![0.0; h_dim],
            w2: Matrix::zeros(v, h_dim),
            b2: vec![0.0; v],
        };
        let mut objective = 0.0;
        let mut x = vec![0.0; input];
        let mut dx = vec![0.0; input];
        for seq in batch {
            assert_eq!(seq.weights.len(), seq.tokens.len() - seq.from);
            let tokens = seq.tokens;
            let mut sum = vec![0.0f32; d];
            for &t in &tokens[..seq.from - 1] {
                axpy(1.0, self.embed.row(t as usize), &mut sum);
            }
            // Per-position gradient w.r.t. the mean input, already divided by
            // the prefix length; spread over the prefix by suffix sums below.
            let mut mean_grads: Vec<(usize, Vec<f32>)> = Vec::new();
            for pos in seq.from..tokens.len() {
                axpy(1.0, self.embed.row(tokens[pos - 1] as usize), &mut sum);
                let w = seq.weights[pos - seq.from] as f32;
                let inv = 1.0 / pos as f32;
                let mean: Vec<f32> = sum.iter().map(|s| s * inv).collect();
                self.input(&tokens[..pos], &mean, &mut x);
                let h = self.hidden(&x);
                let lp = log_softmax(&self.logits(&h));
                let target = tokens[pos] as usize;
                objective += w as f64 * lp[target];
                if w == 0.0 {
                    continue;
                }
                let mut dlogits: Vec<f32> = lp.iter().map(|l| -w * l.exp() as f32).collect();
                dlogits[target] += w;
                g.w2.add_outer(&dlogits, &h);
                axpy(1.0, &dlogits, &mut g.b2);
                if !need_w1 {
                    continue;
                }
                let mut dh = vec![0.0; h_dim];
                self.w2.transpose_mul_add(&dlogits, &mut dh);
                for (dhi, hi) in dh.iter_mut().zip(&h) {
                    *dhi *= 1.0 - hi * hi;
                }
                g.w1.as_mut().unwrap().add_outer(&dh, &x);
                axpy(1.0, &dh, &mut g.b1);
                if let Some(ge) = g.embed.as_mut() {
                    dx.fill(0.0);
                    self.w1.transpose_mul_add(&dh, &mut dx);
                    for k in 0..cfg.context {
                        if let Some(p) = pos.checked_sub(k + 1) {
                            axpy(1.0, &dx[k * d..(k + 1) * d], ge.row_mut(tokens[p] as usize));
                        }
                    }
                    let gm: Vec<f32> = dx[cfg.context * d..].iter().map(|v| v * inv).collect();
                    mean_grads.push((pos, gm));
                }
            }
            if let Some(ge) = g.embed.as_mut() {
                // Token j feeds the mean of every position pos > j.
                let mut acc = vec![0.0f32; d];
                let mut next = mean_grads.len();
                for j in (0..tokens.len().saturating_sub(1)).rev() {
                    while next > 0 && mean_grads[next - 1].0 > j {
                        next -= 1;
                        axpy(1.0, &mean_grads[next].1, &mut acc);
                    }
                    axpy(1.0, &acc, ge.row_mut(tokens[j] as usize));
                }
            }
        }
        (g, objective)
    }

    /// One ascent step on the weighted log-likelihood. Only trainable groups
    /// change. Returns the objective before the step.
    pub fn ascend(&mut self, batch: &[WeightedTokens<'_>], lr: f64, optimizer: OptimizerKind) -> f64 {
        if self.trainable == 0 {
            return self.objective(batch);
        }
        let (g, objective) = self.gradient(batch);
        let lr = lr as f32;
        match optimizer {
            OptimizerKind::Sgd => {
                sgd(lr, &mut self.w2.data, &g.w2.data);
                sgd(lr, &mut self.b2, &g.b2);
                if let Some(w1) = &g.w1 {
                    sgd(lr, &mut self.w1.data, &w1.data);
                    sgd(lr, &mut self.b1, &g.b1);
                }
                if let Some(e) = &g.embed {
                    sgd(lr, &mut self.embed.data, &e.data);
                }
            }
            OptimizerKind::Adam => {
                self.adam.begin_step();
                self.adam.update(0, lr, &mut self.w2.data, &g.w2.data);
                self.adam.update(1, lr, &mut self.b2, &g.b2);
                if let Some(w1) = &g.w1 {
                    self.adam.update(2, lr, &mut self.w1.data, &w1.data);
                    self.adam.update(3, lr, &mut self.b1, &g.b1);
                }
                if let Some(e) = &g.embed {
                    self.adam.update(4, lr, &mut self.embed.data, &e.data);
                }
            }
        }
        objective
    }

    /// Weighted log-likelihood without updating.
    pub fn objective(&self, batch: &[WeightedTokens<'_>]) -> f64 {
        batch
            .iter()
            .map(|s| {
                self.logprobs(s.tokens, s.from)
                    .iter()
                    .zip(s.weights)
                    .map(|(l, w)| l * w)
                    .sum::<f64>()
            })
            .sum()
    }

    /// Supervised next-token step on whole sequences, averaging the loss over
    /// all predicted tokens. Returns the mean NLL before the step.
    pub fn supervised_step(&mut self, sequences: &[Vec<TokenId>], lr: f64, optimizer: OptimizerKind) -> f64 {
        let total: usize = sequences.iter().map(|s| s.len().saturating_sub(1)).sum();
        if total == 0 {
            return 0.0;
        }
        let weights: Vec<Vec<f64>> = sequences
            .iter()
            .map(|s| vec![1.0 / total as f64; s.len().saturating_sub(1)])
            .collect();
        let batch: Vec<WeightedTokens<'_>> = sequences
            .iter()
            .zip(&weights)
            .filter(|(s, _)| s.len() >= 2)
            .map(|(s, w)| WeightedTokens {
                tokens: s,
                from: 1,
                weights: w,
            })
            .collect();
        -self.ascend(&batch, lr, optimizer)
    }
}

/// Incremental decoding state: the prefix and its embedding sum.
#[derive(Debug, Clone)]
pub struct Decoder {
    tokens: Vec<TokenId>,
    sum: Vec<f32>,
}

impl Decoder {
    pub fn push(&mut self, lm: &TinyLm, token: TokenId) {
        axpy(1.0, lm.embed.row(token as usize), &mut self.sum);
        self.tokens.push(token);
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    fn mean(&self) -> Vec<f32> {
        let n = self.tokens.len().max(1) as f32;
        self.sum.iter().map(|s| s / n).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lm(trainable: usize) -> TinyLm {
        let vocab = Vocabulary::build(&["<BOS>", "<EOS>"], ["a b c d", "e f"]);
        let cfg = LmConfig {
            embed_dim: 4,
            context: 2,
            hidden: 5,
        };
        let mut m = TinyLm::new(vocab, cfg, &mut ChaCha8Rng::seed_from_u64(1));
        m.set_trainable_groups(trainable);
        m
    }

    #[test]
    fn vocabulary_keeps_reserved_tokens_whole() {
        let v = Vocabulary::build(&["<BOS>", "<GO>"], ["flights to boston?"]);
        let ids = v.encode("<BOS> flights <GO> to boston? zzz");
        assert_eq!(v.decode(&ids), "<BOS> flights <GO> to boston ? <unk>");
        assert_eq!(v.token(0), "<BOS>");
        assert_eq!(v.token(2), UNK);
    }

    /// Central finite differences of the objective in f64 against the
    /// analytic gradient, for every parameter of every group.
    #[test]
    fn gradient_matches_finite_differences() {
        let m = lm(3);
        let toks: Vec<TokenId> = vec![0, 3, 4, 5, 3, 1];
        let weights = [0.5, -1.0, 2.0, 1.0, 0.25];
        let batch = [WeightedTokens {
            tokens: &toks,
            from: 1,
            weights: &weights,
        }];
        let (g, _) = m.gradient(&batch);
        let eps = 1e-2f32;
        let check = |get: &dyn Fn(&mut TinyLm) -> &mut [f32], analytic: &[f32]| {
            for i in 0..analytic.len() {
                let mut plus = m.clone();
                get(&mut plus)[i] += eps;
                let mut minus = m.clone();
                get(&mut minus)[i] -= eps;
                let numeric = (plus.objective(&batch) - minus.objective(&batch)) / (2.0 * eps as f64);
                assert!(
                    (numeric - analytic[i] as f64).abs() < 2e-3 + 1e-2 * numeric.abs(),
                    "param {i}: numeric {numeric} analytic {}",
                    analytic[i]
                );
            }
        };
        check(&|m| &mut m.w2.data, &g.w2.data);
        check(&|m| &mut m.b2, &g.b2);
        check(&|m| &mut m.w1.data, &g.w1.as_ref().unwrap().data);
        check(&|m| &mut m.b1, &g.b1);
        check(&|m| &mut m.embed.data, &g.embed.as_ref().unwrap().data);
    }

    #[test]
    fn frozen_groups_do_not_move() {
        let mut m = lm(1);
        let before: Vec<Vec<f32>> = (0..3).map(|g| m.group_parameters(g)).collect();
        m.supervised_step(&[vec![0, 3, 4, 1]], 0.1, OptimizerKind::Sgd);
        assert_ne!(m.group_parameters(0), before[0]);
        assert_eq!(m.group_parameters(1), before[1]);
        assert_eq!(m.group_parameters(2), before[2]);
    }

    #[test]
    fn memorizes_a_sequence() {
        let mut m = lm(3);
        let seq = vec![0, 3, 4, 5, 6, 1];
        let start = m.mean_nll(&seq, 1);
        for _ in 0..300 {
            m.supervised_step(std::slice::from_ref(&seq), 0.01, OptimizerKind::Adam);
        }
        let end = m.mean_nll(&seq, 1);
        assert!(end < 0.05 && end < start, "{start} -> {end}");
    }

    #[test]
    fn incremental_and_batch_scores_agree() {
        let m = lm(3);
        let seq = vec![0, 3, 4, 5];
        let mut dec = m.start(&seq[..1]);
        for (i, &t) in seq[1..].iter().enumerate() {
            let lp = m.next_logprobs(&dec)[t as usize];
            assert_eq!(lp, m.logprobs(&seq, 1)[i]);
            dec.push(&m, t);
        }
    }

    #[test]
    fn serde_round_trip_preserves_scores() {
        let m = lm(2);
        let json = serde_json::to_string(&m).unwrap();
        let back: TinyLm = serde_json::from_str(&json).unwrap();
        assert_eq!(back.logprobs(&[0, 3, 4], 1), m.logprobs(&[0, 3, 4], 1));
        assert_eq!(back.trainable_groups(), 2);
    }
}
