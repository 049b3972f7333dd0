//! Per-datapoint rewards: the affine mix of validation and per-datapoint
//! performance, the KL-penalized reward fed to the policy update, and the
//! adaptive KL coefficient controller.

use serde::{Deserialize, Serialize};

use crate::datamodel::GeneratedDatapoint;
use crate::learner::Learner;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RewardError {
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("log-probability sequences differ in length ({policy} vs {reference})")]
    LengthMismatch { policy: usize, reference: usize },
}

fn unit(name: &'static str, value: f64) -> Result<f64, RewardError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(RewardError::OutOfRange { name, value })
    }
}

/// Reward decomposition of one generated datapoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub p_meta: f64,
    pub p_d: f64,
    pub r_d: f64,
    /// `beta * sum_t (log pi_t - log rho_t)`.
    pub kl_term: f64,
    pub final_reward: f64,
}

impl RewardRecord {
    pub fn compute(
        p_meta: f64,
        p_d: f64,
        alpha: f64,
        datapoint: &GeneratedDatapoint,
        ctrl: &KlController,
    ) -> Result<Self, RewardError> {
        let r_d = combine(p_meta, p_d, alpha)?;
        let penalty = kl_penalized(
            r_d,
            &datapoint.token_logprobs_policy,
            &datapoint.token_logprobs_reference,
            ctrl,
        )?;
        Ok(Self {
            p_meta,
            p_d,
            r_d,
            kl_term: penalty.kl_term,
            final_reward: penalty.final_reward,
        })
    }
}

/// `alpha * p_meta + (1 - alpha) * p_d`.
pub fn combine(p_meta: f64, p_d: f64, alpha: f64) -> Result<f64, RewardError> {
    let p_meta = unit("p_meta", p_meta)?;
    let p_d = unit("p_d", p_d)?;
    let alpha = unit("alpha", alpha)?;
    Ok(alpha * p_meta + (1.0 - alpha) * p_d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlPenalty {
    pub final_reward: f64,
    pub kl_term: f64,
    /// `log pi_t - log rho_t` per generated token.
    pub per_token_log_ratio: Vec<f64>,
}

/// `r_d - beta * sum_t (log pi_t - log rho_t)`.
pub fn kl_penalized(
    r_d: f64,
    logprobs_policy: &[f64],
    logprobs_reference: &[f64],
    ctrl: &KlController,
) -> Result<KlPenalty, RewardError> {
    if logprobs_policy.len() != logprobs_reference.len() {
        return Err(RewardError::LengthMismatch {
            policy: logprobs_policy.len(),
            reference: logprobs_reference.len(),
        });
    }
    let per_token_log_ratio: Vec<f64> = logprobs_policy
        .iter()
        .zip(logprobs_reference)
        .map(|(p, r)| p - r)
        .collect();
    let kl_term = ctrl.beta * per_token_log_ratio.iter().sum::<f64>();
    Ok(KlPenalty {
        final_reward: r_d - kl_term,
        kl_term,
        per_token_log_ratio,
    })
}

/// Adaptive KL coefficient: proportional control of the observed KL toward
/// `target_kl`, with the error clipped to +-20%.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KlController {
    pub beta: f64,
    pub target_kl: f64,
    pub horizon: f64,
    pub adaptive: bool,
}

impl Default for KlController {
    fn default() -> Self {
        Self {
            beta: 0.2,
            target_kl: 6.0,
            horizon: 10_000.0,
            adaptive: true,
        }
    }
}

impl KlController {
    pub fn fixed(beta: f64) -> Self {
        Self {
            beta,
            adaptive: false,
            ..Self::default()
        }
    }

    /// Controller after observing a mean per-datapoint KL over a batch of
    /// `batch_size` datapoints.
    pub fn update_beta(&self, observed_kl: f64, batch_size: usize) -> Self {
        if !self.adaptive || !observed_kl.is_finite() {
            return *self;
        }
        let error = ((observed_kl - self.target_kl) / self.target_kl).clamp(-0.2, 0.2);
        let beta = self.beta * (1.0 + error * batch_size as f64 / self.horizon);
        Self {
            beta: if beta > 0.0 { beta } else { self.beta },
            ..*self
        }
    }
}

/// Mean/std whitening; a constant batch maps to zeros.
pub fn whiten(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / std).collect()
}

/// Whitened terminal scores for a policy update batch. Entries flagged
/// unusable receive the batch minimum so format violations stay the worst
/// outcome.
pub fn terminal_scores(r_d: &[f64], usable: &[bool]) -> Vec<f64> {
    let mut z = whiten(r_d);
    let floor = z.iter().copied().fold(f64::INFINITY, f64::min);
    for (score, &ok) in z.iter_mut().zip(usable) {
        if !ok {
            *score = floor;
        }
    }
    z
}

/// Learner performance on one generated datapoint; unusable datapoints score 0.
pub fn per_datapoint_performance(datapoint: &GeneratedDatapoint, learner: &dyn Learner) -> f64 {
    match datapoint.usable() {
        Some(example) => learner.example_performance(example).clamp(0.0, 1.0),
        None => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combine_examples() {
        assert!((combine(0.8, 0.6, 0.5).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(combine(0.3, 0.3, 0.9).unwrap(), 0.3);
        assert_eq!(combine(0.4, 0.9, 1.0).unwrap(), 0.4);
        assert!(combine(1.2, 0.5, 0.5).is_err());
        assert!(combine(0.2, -0.1, 0.5).is_err());
    }

    #[test]
    fn kl_penalty_examples() {
        let ctrl = KlController::fixed(0.2);
        let same = kl_penalized(0.7, &[-1.0, -2.0], &[-1.0, -2.0], &ctrl).unwrap();
        assert_eq!(same.final_reward, 0.7);
        let p = kl_penalized(0.7, &[-1.0, -0.5], &[-1.25, -0.75], &ctrl).unwrap();
        assert!((p.final_reward - 0.6).abs() < 1e-12);
        assert_eq!(p.per_token_log_ratio, vec![0.25, 0.25]);
        let below = kl_penalized(0.7, &[-3.0], &[-1.0], &ctrl).unwrap();
        assert!(below.final_reward > 0.7);
        assert!(kl_penalized(0.7, &[-1.0], &[], &ctrl).is_err());
    }

    #[test]
    fn controller_direction() {
        let ctrl = KlController::default();
        assert_eq!(ctrl.update_beta(ctrl.target_kl, 100).beta, ctrl.beta);
        assert!(ctrl.update_beta(100.0, 100).beta > ctrl.beta);
        assert!(ctrl.update_beta(0.0, 100).beta < ctrl.beta);
        let fixed = KlController::fixed(0.2);
        assert_eq!(fixed.update_beta(100.0, 100), fixed);
        // Error is clipped at +20%.
        let up = ctrl.update_beta(1e9, 10_000);
        assert!((up.beta - 0.24).abs() < 1e-12);
    }

    #[test]
    fn whitening_handles_constant_batches() {
        assert_eq!(whiten(&[0.5, 0.5, 0.5]), vec![0.0; 3]);
        let z = whiten(&[1.0, 2.0, 3.0]);
        assert!(z.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn unusable_entries_get_the_minimum() {
        let z = terminal_scores(&[0.9, 0.1, 0.5, 0.0], &[true, true, true, false]);
        let min = z.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(z[3], min);
        assert!(z[1] >= min);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn combine_is_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0, d in 0.0f64..0.5, alpha in 0.0f64..1.0) {
                let base = combine(a, b, alpha).unwrap();
                prop_assert!(combine((a + d).min(1.0), b, alpha).unwrap() >= base - 1e-15);
                prop_assert!(combine(a, (b + d).min(1.0), alpha).unwrap() >= base - 1e-15);
                prop_assert!((0.0..=1.0).contains(&base));
            }

            #[test]
            fn whitening_preserves_rank(values in prop::collection::vec(-10.0f64..10.0, 2..40)) {
                let z = whiten(&values);
                for i in 0..values.len() {
                    for j in 0..values.len() {
                        if values[i] < values[j] {
                            prop_assert!(z[i] < z[j]);
                        }
                        if values[i] == values[j] {
                            prop_assert_eq!(z[i], z[j]);
                        }
                    }
                }
            }
        }
    }
}
