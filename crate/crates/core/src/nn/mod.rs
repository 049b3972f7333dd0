//! Small dense building blocks for the desk-scale backends: parameter
//! matrices, softmax helpers, optimizers and feature hashing.

mod lm;

pub use lm::{Decoder, LmConfig, TinyLm, Vocabulary, WeightedTokens, UNK};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Row-major `rows x cols` matrix of `f32`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, std: f32, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("positive std");
        Self {
            rows,
            cols,
            data: (0..rows * cols).map(|_| normal.sample(rng)).collect(),
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out = self * x + bias`.
    pub fn affine(&self, x: &[f32], bias: &[f32], out: &mut [f32]) {
        debug_assert_eq!(x.len(), self.cols);
        for (r, o) in out.iter_mut().enumerate() {
            *o = bias[r] + dot(self.row(r), x);
        }
    }

    /// `out += self^T * g`.
    pub fn transpose_mul_add(&self, g: &[f32], out: &mut [f32]) {
        for (r, &gr) in g.iter().enumerate() {
            if gr != 0.0 {
                axpy(gr, self.row(r), out);
            }
        }
    }

    /// `self += g (outer) x`.
    pub fn add_outer(&mut self, g: &[f32], x: &[f32]) {
        for (r, &gr) in g.iter().enumerate() {
            if gr != 0.0 {
                axpy(gr, x, self.row_mut(r));
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut sum: f32 = acc.iter().sum();
    for k in chunks * 8..a.len() {
        sum += a[k] * b[k];
    }
    sum
}

/// `y += a * x`.
#[inline]
pub fn axpy(a: f32, x: &[f32], y: &mut [f32]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Log-softmax in `f64` for numerically stable log-probabilities.
pub fn log_softmax(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let sum: f64 = logits.iter().map(|&l| (l as f64 - max).exp()).sum();
    let log_z = max + sum.ln();
    logits.iter().map(|&l| l as f64 - log_z).collect()
}

pub fn softmax(logits: &[f32]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// Which update rule a training step applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Adam state over a fixed list of parameter tensors. Steps ascend the
/// supplied gradient.
#[derive(Debug, Clone, Default)]
pub struct Adam {
    step: i32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

const BETA1: f32 = 0.9;
const BETA2: f32 = 0.999;
const EPS: f32 = 1e-8;

impl Adam {
    pub fn new() -> Self {
        Self::default()
    }

    /// Advances the shared step counter; call once per optimizer step before
    /// [`Adam::update`] on each tensor.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    pub fn update(&mut self, slot: usize, lr: f32, params: &mut [f32], grad: &[f32]) {
        if self.m.len() <= slot {
            self.m.resize(slot + 1, Vec::new());
            self.v.resize(slot + 1, Vec::new());
        }
        if self.m[slot].len() != params.len() {
            self.m[slot] = vec![0.0; params.len()];
            self.v[slot] = vec![0.0; params.len()];
        }
        let bias1 = 1.0 - BETA1.powi(self.step.max(1));
        let bias2 = 1.0 - BETA2.powi(self.step.max(1));
        let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
        for i in 0..params.len() {
            let g = grad[i];
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            params[i] += lr * m_hat / (v_hat.sqrt() + EPS);
        }
    }
}

/// Plain gradient ascent step.
pub fn sgd(lr: f32, params: &mut [f32], grad: &[f32]) {
    axpy(lr, grad, params);
}

/// FNV-1a hash of `text` salted by `salt`, reduced to `buckets`.
pub fn feature_bucket(text: &str, salt: u8, buckets: usize) -> usize {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in std::iter::once(salt).chain(text.bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    (h % buckets as u64) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_softmax_normalizes() {
        let lp = log_softmax(&[1.0, 2.0, 3.0, -50.0]);
        let total: f64 = lp.iter().map(|l| l.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f32> = (0..19).map(|i| i as f32 * 0.5).collect();
        let b: Vec<f32> = (0..19).map(|i| 1.0 - i as f32 * 0.1).collect();
        let naive: f32 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-4);
    }

    #[test]
    fn adam_ascends_a_concave_objective() {
        // maximize -(x - 3)^2
        let mut x = [0.0f32];
        let mut adam = Adam::new();
        for _ in 0..2000 {
            let g = [-2.0 * (x[0] - 3.0)];
            adam.begin_step();
            adam.update(0, 0.05, &mut x, &g);
        }
        assert!((x[0] - 3.0).abs() < 1e-2, "{}", x[0]);
    }

    #[test]
    fn buckets_are_stable() {
        assert_eq!(feature_bucket("boston", 0, 1024), feature_bucket("boston", 0, 1024));
        assert_ne!(
            feature_bucket("boston", 0, 1 << 20),
            feature_bucket("boston", 1, 1 << 20)
        );
    }
}
