//! Clipped-surrogate policy update without a value head: returns-to-go of a
//! terminal score plus per-token KL shaping serve as advantages.

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::backend::{LanguageModelBackend, WeightedSequence};
use crate::datamodel::TokenId;
use crate::nn::OptimizerKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub epochs_per_batch: usize,
    pub clip_ratio: f64,
    pub learning_rate: f64,
    pub minibatch_size: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            epochs_per_batch: 4,
            clip_ratio: 0.2,
            learning_rate: 1e-5,
            minibatch_size: 64,
        }
    }
}

/// One sampled continuation with the log-probabilities recorded at sampling
/// time and its terminal reward.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoSample {
    pub prompt: Vec<TokenId>,
    pub tokens: Vec<TokenId>,
    pub old_logprobs: Vec<f64>,
    pub reference_logprobs: Vec<f64>,
    pub terminal_reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PpoStats {
    /// Mean over samples of `sum_t (log pi_old - log rho)`.
    pub mean_kl: f64,
    pub mean_reward: f64,
    /// Share of token-steps whose ratio was clipped.
    pub clip_fraction: f64,
    pub updates: usize,
    /// Set when a non-finite loss forced the pre-update parameters back.
    pub aborted: bool,
}

/// Per-token advantages: returns-to-go (discount 1) of
/// `-beta * (old_t - ref_t)` plus the terminal reward on the last token.
pub fn advantages(sample: &PpoSample, beta: f64) -> Vec<f64> {
    let n = sample.tokens.len();
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let mut r = -beta * (sample.old_logprobs[t] - sample.reference_logprobs[t]);
        if t + 1 == n {
            r += sample.terminal_reward;
        }
        acc += r;
        out[t] = acc;
    }
    out
}

/// Runs `epochs_per_batch` passes of shuffled minibatch SGD on the clipped
/// surrogate. On a non-finite loss or parameters the policy is restored to
/// its state before the call.
pub fn ppo_step(
    policy: &mut Box<dyn LanguageModelBackend>,
    samples: &[PpoSample],
    config: &PpoConfig,
    beta: f64,
    rng: &mut dyn RngCore,
) -> PpoStats {
    let mut stats = PpoStats {
        mean_kl: samples
            .iter()
            .map(|s| {
                s.old_logprobs
                    .iter()
                    .zip(&s.reference_logprobs)
                    .map(|(p, r)| p - r)
                    .sum::<f64>()
            })
            .sum::<f64>()
            / samples.len().max(1) as f64,
        mean_reward: samples.iter().map(|s| s.terminal_reward).sum::<f64>() / samples.len().max(1) as f64,
        ..PpoStats::default()
    };
    let active: Vec<usize> = (0..samples.len()).filter(|&i| !samples[i].tokens.is_empty()).collect();
    if active.is_empty() || policy.trainable_groups() == 0 {
        return stats;
    }
    let adv: Vec<Vec<f64>> = samples.iter().map(|s| advantages(s, beta)).collect();
    let snapshot = policy.clone_box();
    let (lo, hi) = (1.0 - config.clip_ratio, 1.0 + config.clip_ratio);
    let (mut clipped, mut steps) = (0usize, 0usize);
    let mut order = active;
    'epochs: for _ in 0..config.epochs_per_batch {
        order.shuffle(rng);
        for chunk in order.chunks(config.minibatch_size.max(1)) {
            let total: usize = chunk.iter().map(|&i| samples[i].tokens.len()).sum();
            let mut surrogate = 0.0;
            let mut batch = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let s = &samples[i];
                let new = policy.score(&s.prompt, &s.tokens);
                let weights: Vec<f64> = (0..s.tokens.len())
                    .map(|t| {
                        let ratio = (new[t] - s.old_logprobs[t]).exp();
                        let a = adv[i][t];
                        surrogate += (ratio * a).min(ratio.clamp(lo, hi) * a);
                        steps += 1;
                        if (a >= 0.0 && ratio > hi) || (a < 0.0 && ratio < lo) {
                            clipped += 1;
                            0.0
                        } else {
                            a * ratio / total as f64
                        }
                    })
                    .collect();
                batch.push(WeightedSequence {
                    prompt: s.prompt.clone(),
                    continuation: s.tokens.clone(),
                    weights,
                });
            }
            let ok = surrogate.is_finite()
                && policy
                    .ascend_weighted_logprob(&batch, config.learning_rate, OptimizerKind::Sgd)
                    .is_ok()
                && policy.is_finite();
            if !ok {
                *policy = snapshot;
                stats.aborted = true;
                break 'epochs;
            }
            stats.updates += 1;
        }
    }
    stats.clip_fraction = clipped as f64 / steps.max(1) as f64;
    stats
}
