use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_corpus, Evaluation, Learner, LearnerConfig, LearnerError, Prediction, WordVectors};
use crate::corpus::Corpus;
use crate::datamodel::{tokenize, LabeledExample, TaskKind};
use crate::nn::{axpy, feature_bucket, log_softmax, Adam, Matrix};

/// Hashed bag-of-embeddings sentence classifier over unigrams and bigrams.
#[derive(Debug, Clone)]
pub struct IntentClassifier {
    labels: Vec<String>,
    buckets: usize,
    embed: Matrix,
    w: Matrix,
    b: Vec<f32>,
    lr: f32,
    adam: Adam,
}

/// Norm of pretrained unigram rows.
const VECTOR_SCALE: f32 = 1.0;

fn features(utterance: &str, buckets: usize) -> Vec<usize> {
    let words: Vec<&str> = tokenize(utterance);
    let mut out: Vec<usize> = words.iter().map(|w| feature_bucket(w, 0, buckets)).collect();
    let padded: Vec<&str> = std::iter::once("<s>").chain(words).chain(["</s>"]).collect();
    for pair in padded.windows(2) {
        out.push(feature_bucket(&format!("{} {}", pair[0], pair[1]), 1, buckets));
    }
    out
}

impl IntentClassifier {
    pub fn new(labels: Vec<String>, seed: u64, config: &LearnerConfig) -> Self {
        Self::with_vectors(labels, seed, config, None)
    }

    pub fn with_vectors(labels: Vec<String>, seed: u64, config: &LearnerConfig, vectors: Option<&WordVectors>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = labels.len();
        let mut embed = Matrix::random(config.hash_buckets, config.embed_dim, 0.1, &mut rng);
        if let Some(v) = vectors {
            v.seed_buckets(&mut embed, 0, VECTOR_SCALE);
        }
        Self {
            buckets: config.hash_buckets,
            embed,
            w: Matrix::random(k, config.embed_dim, 0.1, &mut rng),
            b: vec![0.0; k],
            labels,
            lr: config.intent_learning_rate as f32,
            adam: Adam::new(),
        }
    }

    fn hidden(&self, feats: &[usize]) -> Vec<f32> {
        let mut h = vec![0.0; self.embed.cols];
        let inv = 1.0 / feats.len().max(1) as f32;
        for &f in feats {
            axpy(inv, self.embed.row(f), &mut h);
        }
        h
    }

    fn log_probs(&self, utterance: &str) -> Vec<f64> {
        let h = self.hidden(&features(utterance, self.buckets));
        let mut logits = vec![0.0; self.labels.len()];
        self.w.affine(&h, &self.b, &mut logits);
        log_softmax(&logits)
    }

    fn argmax(&self, utterance: &str) -> usize {
        let lp = self.log_probs(utterance);
        (0..lp.len()).fold(0, |best, i| if lp[i] > lp[best] { i } else { best })
    }
}

impl Learner for IntentClassifier {
    fn task(&self) -> TaskKind {
        TaskKind::IntentDetection
    }

    fn output_size(&self) -> usize {
        self.labels.len()
    }

    fn train_step(&mut self, batch: &[LabeledExample]) -> Result<f64, LearnerError> {
        if batch.is_empty() {
            return Err(LearnerError::EmptyBatch);
        }
        let k = self.labels.len();
        let mut g_embed = Matrix::zeros(self.embed.rows, self.embed.cols);
        let mut g_w = Matrix::zeros(k, self.w.cols);
        let mut g_b = vec![0.0f32; k];
        let scale = 1.0 / batch.len() as f32;
        let mut loss = 0.0;
        for example in batch {
            let Some(target) = self.labels.iter().position(|l| *l == example.label) else {
                continue;
            };
            let feats = features(&example.utterance, self.buckets);
            let h = self.hidden(&feats);
            let mut logits = vec![0.0; k];
            self.w.affine(&h, &self.b, &mut logits);
            let lp = log_softmax(&logits);
            loss -= lp[target];
            let mut d: Vec<f32> = lp.iter().map(|l| -(l.exp() as f32) * scale).collect();
            d[target] += scale;
            g_w.add_outer(&d, &h);
            axpy(1.0, &d, &mut g_b);
            let mut dh = vec![0.0; h.len()];
            self.w.transpose_mul_add(&d, &mut dh);
            let inv = 1.0 / feats.len().max(1) as f32;
            for &f in &feats {
                axpy(inv, &dh, g_embed.row_mut(f));
            }
        }
        self.adam.begin_step();
        self.adam.update(0, self.lr, &mut self.embed.data, &g_embed.data);
        self.adam.update(1, self.lr, &mut self.w.data, &g_w.data);
        self.adam.update(2, self.lr, &mut self.b, &g_b);
        Ok(loss / batch.len() as f64)
    }

    fn predict(&self, utterance: &str) -> Prediction {
        Prediction::Intent(self.labels[self.argmax(utterance)].clone())
    }

    fn example_performance(&self, example: &LabeledExample) -> f64 {
        f64::from(u8::from(self.labels[self.argmax(&example.utterance)] == example.label))
    }

    fn evaluate(&self, corpus: &Corpus) -> Result<Evaluation, LearnerError> {
        check_corpus(TaskKind::IntentDetection, corpus)?;
        let per_example: Vec<f64> = corpus.examples.iter().map(|e| self.example_performance(e)).collect();
        Ok(Evaluation {
            metric: per_example.iter().sum::<f64>() / per_example.len() as f64,
            per_example,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{intent_fixture, stratified_sample, SampleSpec};
    use crate::learner::{spawn, train, LabelSpace};

    #[test]
    fn learns_the_fixture_from_a_small_seed() {
        let d = intent_fixture(0);
        let seed = stratified_sample(&d.train, &SampleSpec::new(0.01, 0)).unwrap().corpus;
        let space = LabelSpace::for_corpora(TaskKind::IntentDetection, &[&d.train]);
        let mut l = spawn(TaskKind::IntentDetection, &space, 0, &LearnerConfig::default()).unwrap();
        let batches = (0..100).map(|_| seed.examples.clone());
        let curve = train(l.as_mut(), batches, 100).unwrap();
        assert_eq!(curve.len(), 100);
        assert!(curve[99] < curve[0]);
        let acc = l.evaluate(&d.validation).unwrap().metric;
        assert!(acc > 0.2, "{acc}");
    }

    #[test]
    fn training_is_deterministic() {
        let d = intent_fixture(1);
        let space = LabelSpace::for_corpora(TaskKind::IntentDetection, &[&d.train]);
        let run = || {
            let mut l = spawn(TaskKind::IntentDetection, &space, 3, &LearnerConfig::default()).unwrap();
            train(l.as_mut(), d.train.examples.chunks(10).map(<[_]>::to_vec), 20).unwrap();
            l.evaluate(&d.validation).unwrap()
        };
        assert_eq!(run(), run());
    }
}
