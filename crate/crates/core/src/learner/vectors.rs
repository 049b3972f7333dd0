//! Word vectors pretrained on unlabeled in-domain text: sentence-level
//! positive PMI co-occurrence rows, randomly projected and normalized.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::tokenize;
use crate::nn::{feature_bucket, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordVectors {
    index: BTreeMap<String, usize>,
    vectors: Matrix,
}

impl WordVectors {
    /// Fits `dim`-dimensional unit vectors for every word of `texts`.
    pub fn fit<S: AsRef<str>>(texts: &[S], dim: usize, seed: u64) -> Self {
        let mut index = BTreeMap::new();
        let sentences: Vec<Vec<usize>> = texts
            .iter()
            .map(|t| {
                let mut ids: Vec<usize> = tokenize(t.as_ref())
                    .into_iter()
                    .map(|w| {
                        let n = index.len();
                        *index.entry(w.to_string()).or_insert(n)
                    })
                    .collect();
                ids.sort_unstable();
                ids.dedup();
                ids
            })
            .collect();
        let v = index.len();
        let mut counts = vec![0.0f64; v * v];
        for s in &sentences {
            for &a in s {
                for &b in s {
                    if a != b {
                        counts[a * v + b] += 1.0;
                    }
                }
            }
        }
        let row: Vec<f64> = (0..v).map(|a| counts[a * v..(a + 1) * v].iter().sum()).collect();
        let total: f64 = row.iter().sum();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection = Matrix::random(dim, v, 1.0, &mut rng);
        let mut vectors = Matrix::zeros(v, dim);
        let mut ppmi = vec![0.0f32; v];
        for a in 0..v {
            for b in 0..v {
                let c = counts[a * v + b];
                ppmi[b] = if c > 0.0 {
                    (c * total / (row[a] * row[b])).ln().max(0.0) as f32
                } else {
                    0.0
                };
            }
            let out = vectors.row_mut(a);
            projection.affine(&ppmi, &vec![0.0; dim], out);
            let norm = out.iter().map(|x| x * x).sum::<f32>().sqrt();
            if norm > 0.0 {
                out.iter_mut().for_each(|x| *x /= norm);
            }
        }
        Self { index, vectors }
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.index.get(word).map(|&i| self.vectors.row(i))
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f32> {
        Some(crate::nn::dot(self.get(a)?, self.get(b)?))
    }

    /// Overwrites the hashed unigram rows of `embed` (salt `salt`) with the
    /// vectors of known words scaled by `scale`. Colliding words are summed.
    pub(crate) fn seed_buckets(&self, embed: &mut Matrix, salt: u8, scale: f32) {
        if embed.cols != self.dim() {
            return;
        }
        let mut touched = std::collections::BTreeSet::new();
        for (word, &i) in &self.index {
            let bucket = feature_bucket(word, salt, embed.rows);
            let row = embed.row_mut(bucket);
            if touched.insert(bucket) {
                row.iter_mut().for_each(|x| *x = 0.0);
            }
            crate::nn::axpy(scale, self.vectors.row(i), row);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn co_occurring_words_are_closer() {
        let texts = [
            "rain umbrella today",
            "umbrella forecast rain",
            "forecast rain",
            "song album today",
            "album playlist song",
            "playlist song",
        ];
        let v = WordVectors::fit(&texts, 16, 0);
        assert_eq!(v.len(), 7);
        let near = v.cosine("rain", "umbrella").unwrap();
        let far = v.cosine("rain", "album").unwrap();
        assert!(near > far, "{near} vs {far}");
        assert!((v.cosine("song", "song").unwrap() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn fitting_is_deterministic() {
        let texts = ["a b c", "b c d", "a d"];
        assert_eq!(WordVectors::fit(&texts, 8, 3), WordVectors::fit(&texts, 8, 3));
    }
}
