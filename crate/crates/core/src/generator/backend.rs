//! The language-model capability the generator is written against, and the
//! built-in word-level backend.

use std::fs;
use std::path::Path;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::datamodel::TokenId;
use crate::nn::{OptimizerKind, TinyLm, WeightedTokens};

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("sampling produced a non-finite distribution at step {step}")]
    Sampling { step: usize },
    #[error("attempted to train a frozen model")]
    Frozen,
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("non-finite objective")]
    NonFinite,
    #[error("unknown backend kind `{0}`")]
    UnknownKind(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(#[from] serde_json::Error),
}

/// Decoding controls. `top_k = 0` and `top_p = 1.0` disable the respective
/// filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingControls {
    pub temperature: f64,
    pub top_k: usize,
    pub top_p: f64,
    pub max_tokens: usize,
}

impl Default for SamplingControls {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_k: 50,
            top_p: 1.0,
            max_tokens: 64,
        }
    }
}

/// Generated continuation with the log-probability of every token under the
/// model's full softmax (independent of the decoding controls).
#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    pub tokens: Vec<TokenId>,
    pub logprobs: Vec<f64>,
    /// Whether the stop token ended the sample.
    pub stopped: bool,
}

/// Prompt, continuation and a weight per continuation token.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSequence {
    pub prompt: Vec<TokenId>,
    pub continuation: Vec<TokenId>,
    pub weights: Vec<f64>,
}

pub trait LanguageModelBackend {
    /// Tag written into checkpoints to select the loader.
    fn kind(&self) -> &'static str;

    fn tokenize(&self, text: &str) -> Vec<TokenId>;

    fn detokenize(&self, tokens: &[TokenId]) -> String;

    fn token_id(&self, token: &str) -> Option<TokenId>;

    fn sample(
        &self,
        prompt: &[TokenId],
        controls: &SamplingControls,
        stop: Option<TokenId>,
        rng: &mut dyn RngCore,
    ) -> Result<Sampled, BackendError>;

    /// `log p(continuation[t] | prompt, continuation[..t])` per token.
    fn score(&self, prompt: &[TokenId], continuation: &[TokenId]) -> Vec<f64>;

    /// One ascent step on `sum_seq sum_t w_t log p_t` over the trainable
    /// groups. Returns the objective before the step.
    fn ascend_weighted_logprob(
        &mut self,
        batch: &[WeightedSequence],
        learning_rate: f64,
        optimizer: OptimizerKind,
    ) -> Result<f64, BackendError>;

    /// Supervised next-token step on whole sequences (the first token is the
    /// context for the rest). Returns the mean NLL before the step.
    fn supervised_step(
        &mut self,
        sequences: &[Vec<TokenId>],
        learning_rate: f64,
        optimizer: OptimizerKind,
    ) -> Result<f64, BackendError> {
        let total: usize = sequences.iter().map(|s| s.len().saturating_sub(1)).sum();
        if total == 0 {
            return Ok(0.0);
        }
        let batch: Vec<WeightedSequence> = sequences
            .iter()
            .filter(|s| s.len() >= 2)
            .map(|s| WeightedSequence {
                prompt: s[..1].to_vec(),
                continuation: s[1..].to_vec(),
                weights: vec![1.0 / total as f64; s.len() - 1],
            })
            .collect();
        Ok(-self.ascend_weighted_logprob(&batch, learning_rate, optimizer)?)
    }

    /// Independent copy that refuses training.
    fn clone_frozen(&self) -> Box<dyn LanguageModelBackend>;

    /// Independent trainable copy with the same trainable groups.
    fn clone_box(&self) -> Box<dyn LanguageModelBackend>;

    /// Parameter groups, ordered from output-adjacent to input-adjacent.
    fn group_count(&self) -> usize;

    fn trainable_groups(&self) -> usize;

    /// Makes the top `n` groups trainable and freezes the rest.
    fn set_trainable_groups(&mut self, n: usize);

    fn group_parameters(&self, group: usize) -> Vec<f32>;

    fn is_finite(&self) -> bool;

    fn save(&self, dir: &Path) -> Result<(), BackendError>;
}

/// Draws a token index from log-probabilities under the decoding controls.
pub fn draw(logprobs: &[f64], controls: &SamplingControls, rng: &mut dyn RngCore) -> Option<usize> {
    let t = controls.temperature.max(1e-6);
    let max = logprobs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let mut order: Vec<usize> = (0..logprobs.len()).collect();
    order.sort_by(|&a, &b| logprobs[b].total_cmp(&logprobs[a]));
    if controls.top_k > 0 {
        order.truncate(controls.top_k);
    }
    let weights: Vec<f64> = order.iter().map(|&i| ((logprobs[i] - max) / t).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut keep = order.len();
    if controls.top_p < 1.0 {
        let mut acc = 0.0;
        for (k, w) in weights.iter().enumerate() {
            acc += w / total;
            if acc >= controls.top_p {
                keep = k + 1;
                break;
            }
        }
    }
    let kept: f64 = weights[..keep].iter().sum();
    if !(kept.is_finite() && kept > 0.0) {
        return None;
    }
    let mut u = rng.random::<f64>() * kept;
    for (k, w) in weights[..keep].iter().enumerate() {
        if u < *w {
            return Some(order[k]);
        }
        u -= w;
    }
    Some(order[keep - 1])
}

/// The built-in word-level backend wrapping [`TinyLm`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TinyBackend {
    lm: TinyLm,
    frozen: bool,
}

pub const TINY_KIND: &str = "tiny_lm";

#[derive(Serialize, Deserialize)]
struct Stored {
    kind: String,
    frozen: bool,
    model: TinyLm,
}

impl TinyBackend {
    pub fn new(lm: TinyLm) -> Self {
        Self { lm, frozen: false }
    }

    pub fn model(&self) -> &TinyLm {
        &self.lm
    }
}

fn full_sequence(prompt: &[TokenId], continuation: &[TokenId]) -> Vec<TokenId> {
    prompt.iter().chain(continuation).copied().collect()
}

impl LanguageModelBackend for TinyBackend {
    fn kind(&self) -> &'static str {
        TINY_KIND
    }

    fn tokenize(&self, text: &str) -> Vec<TokenId> {
        self.lm.vocab().encode(text)
    }

    fn detokenize(&self, tokens: &[TokenId]) -> String {
        self.lm.vocab().decode(tokens)
    }

    fn token_id(&self, token: &str) -> Option<TokenId> {
        self.lm.vocab().id(token)
    }

    fn sample(
        &self,
        prompt: &[TokenId],
        controls: &SamplingControls,
        stop: Option<TokenId>,
        rng: &mut dyn RngCore,
    ) -> Result<Sampled, BackendError> {
        if prompt.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let mut dec = self.lm.start(prompt);
        let mut out = Sampled {
            tokens: Vec::new(),
            logprobs: Vec::new(),
            stopped: false,
        };
        for step in 0..controls.max_tokens {
            let lp = self.lm.next_logprobs(&dec);
            let token = draw(&lp, controls, rng).ok_or(BackendError::Sampling { step })? as TokenId;
            out.tokens.push(token);
            out.logprobs.push(lp[token as usize]);
            if Some(token) == stop {
                out.stopped = true;
                break;
            }
            dec.push(&self.lm, token);
        }
        Ok(out)
    }

    fn score(&self, prompt: &[TokenId], continuation: &[TokenId]) -> Vec<f64> {
        self.lm.logprobs(&full_sequence(prompt, continuation), prompt.len())
    }

    fn ascend_weighted_logprob(
        &mut self,
        batch: &[WeightedSequence],
        learning_rate: f64,
        optimizer: OptimizerKind,
    ) -> Result<f64, BackendError> {
        if self.frozen {
            return Err(BackendError::Frozen);
        }
        let sequences: Vec<(Vec<TokenId>, usize)> = batch
            .iter()
            .map(|s| (full_sequence(&s.prompt, &s.continuation), s.prompt.len()))
            .collect();
        let weighted: Vec<WeightedTokens<'_>> = sequences
            .iter()
            .zip(batch)
            .filter(|((_, from), _)| *from >= 1)
            .map(|((tokens, from), s)| WeightedTokens {
                tokens,
                from: *from,
                weights: &s.weights,
            })
            .collect();
        let objective = self.lm.ascend(&weighted, learning_rate, optimizer);
        if objective.is_finite() {
            Ok(objective)
        } else {
            Err(BackendError::NonFinite)
        }
    }

    fn clone_frozen(&self) -> Box<dyn LanguageModelBackend> {
        let mut lm = self.lm.clone();
        lm.reset_optimizer();
        Box::new(Self { lm, frozen: true })
    }

    fn clone_box(&self) -> Box<dyn LanguageModelBackend> {
        Box::new(Self {
            lm: self.lm.clone(),
            frozen: false,
        })
    }

    fn group_count(&self) -> usize {
        self.lm.group_count()
    }

    fn trainable_groups(&self) -> usize {
        if self.frozen {
            0
        } else {
            self.lm.trainable_groups()
        }
    }

    fn set_trainable_groups(&mut self, n: usize) {
        self.lm.set_trainable_groups(n);
    }

    fn group_parameters(&self, group: usize) -> Vec<f32> {
        self.lm.group_parameters(group)
    }

    fn is_finite(&self) -> bool {
        self.lm.is_finite()
    }

    fn save(&self, dir: &Path) -> Result<(), BackendError> {
        fs::create_dir_all(dir)?;
        let stored = Stored {
            kind: TINY_KIND.to_string(),
            frozen: self.frozen,
            model: self.lm.clone(),
        };
        fs::write(dir.join("backend.json"), serde_json::to_vec(&stored)?)?;
        Ok(())
    }
}

/// Loads a backend saved by [`LanguageModelBackend::save`].
pub fn load_backend(dir: &Path) -> Result<Box<dyn LanguageModelBackend>, BackendError> {
    let bytes = fs::read(dir.join("backend.json"))?;
    let stored: Stored = serde_json::from_slice(&bytes)?;
    if stored.kind != TINY_KIND {
        return Err(BackendError::UnknownKind(stored.kind));
    }
    Ok(Box::new(TinyBackend {
        lm: stored.model,
        frozen: stored.frozen,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LmConfig, Vocabulary};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn backend() -> TinyBackend {
        let vocab = Vocabulary::build(&["<BOS>", "<GO>", "<EOS>"], ["a b c d e"]);
        TinyBackend::new(TinyLm::new(
            vocab,
            LmConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(0),
        ))
    }

    #[test]
    fn sampled_logprobs_match_rescoring() {
        let b = backend();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let controls = SamplingControls {
            temperature: 0.7,
            top_k: 3,
            ..SamplingControls::default()
        };
        for _ in 0..20 {
            let s = b.sample(&[0], &controls, Some(2), &mut rng).unwrap();
            let rescored = b.score(&[0], &s.tokens);
            for (a, r) in s.logprobs.iter().zip(&rescored) {
                assert!(a.is_finite());
                assert!((a - r).abs() <= 1e-5 * r.abs().max(1e-12));
            }
        }
    }

    #[test]
    fn frozen_clone_is_independent() {
        let mut b = backend();
        let frozen = b.clone_frozen();
        let probe = [3, 4, 5];
        let before = frozen.score(&[0], &probe);
        for _ in 0..5 {
            b.supervised_step(&[vec![0, 3, 4, 5, 2]], 0.05, OptimizerKind::Adam)
                .unwrap();
        }
        assert_eq!(frozen.score(&[0], &probe), before);
        assert_ne!(b.score(&[0], &probe), before);
        let mut frozen = frozen;
        assert!(matches!(
            frozen.supervised_step(&[vec![0, 3]], 0.1, OptimizerKind::Sgd),
            Err(BackendError::Frozen)
        ));
    }

    #[test]
    fn top_k_one_is_greedy() {
        let lp = [-2.0, -0.1, -3.0];
        let controls = SamplingControls {
            top_k: 1,
            ..SamplingControls::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..50).all(|_| draw(&lp, &controls, &mut rng) == Some(1)));
    }

    #[test]
    fn top_p_keeps_the_nucleus() {
        let lp: Vec<f64> = [0.6f64, 0.3, 0.1].iter().map(|p| p.ln()).collect();
        let controls = SamplingControls {
            top_p: 0.8,
            ..SamplingControls::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..200).all(|_| draw(&lp, &controls, &mut rng) != Some(2)));
    }

    #[test]
    fn truncation_is_reported() {
        let b = backend();
        let controls = SamplingControls {
            max_tokens: 3,
            ..SamplingControls::default()
        };
        let s = b
            .sample(&[0], &controls, None, &mut ChaCha8Rng::seed_from_u64(2))
            .unwrap();
        assert_eq!(s.tokens.len(), 3);
        assert!(!s.stopped);
    }

    #[test]
    fn checkpoint_round_trip() {
        let b = backend();
        let dir = tempfile::tempdir().unwrap();
        b.save(dir.path()).unwrap();
        let back = load_backend(dir.path()).unwrap();
        let probe = [3, 4, 5, 2];
        for (x, y) in back.score(&[0], &probe).iter().zip(b.score(&[0], &probe)) {
            assert!((x - y).abs() <= 1e-6);
        }
    }
}
