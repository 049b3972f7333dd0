use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::{span_f1, token_f1};
use super::{check_corpus, Evaluation, Learner, LearnerConfig, LearnerError, Prediction, WordVectors};
use crate::corpus::Corpus;
use crate::datamodel::{tokenize, LabeledExample, TaskKind};
use crate::nn::{axpy, feature_bucket, log_softmax, Adam, Matrix};

/// Per-token tagger over hashed features of the token and its neighbours,
/// with one tanh hidden layer. Outputs `O` plus `B-`/`I-` for every slot.
#[derive(Debug, Clone)]
pub struct SlotTagger {
    tags: Vec<String>,
    buckets: usize,
    embed: Matrix,
    w1: Matrix,
    b1: Vec<f32>,
    w2: Matrix,
    b2: Vec<f32>,
    lr: f32,
    adam: Adam,
}

const WINDOW: usize = 3;

fn token_features(words: &[&str], i: usize, buckets: usize) -> [usize; WINDOW] {
    let prev = if i == 0 { "<s>" } else { words[i - 1] };
    let next = words.get(i + 1).copied().unwrap_or("</s>");
    [
        feature_bucket(words[i], 0, buckets),
        feature_bucket(prev, 1, buckets),
        feature_bucket(next, 2, buckets),
    ]
}

impl SlotTagger {
    pub fn new(slot_names: &[String], seed: u64, config: &LearnerConfig) -> Self {
        Self::with_vectors(slot_names, seed, config, None)
    }

    pub fn with_vectors(
        slot_names: &[String],
        seed: u64,
        config: &LearnerConfig,
        vectors: Option<&WordVectors>,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tags = vec!["O".to_string()];
        for name in slot_names {
            tags.push(format!("B-{name}"));
            tags.push(format!("I-{name}"));
        }
        let input = WINDOW * config.embed_dim;
        let mut embed = Matrix::random(config.hash_buckets, config.embed_dim, 0.1, &mut rng);
        if let Some(v) = vectors {
            for salt in 0..WINDOW as u8 {
                v.seed_buckets(&mut embed, salt, 1.0);
            }
        }
        Self {
            buckets: config.hash_buckets,
            embed,
            w1: Matrix::random(config.hidden, input, 1.0 / (input as f32).sqrt(), &mut rng),
            b1: vec![0.0; config.hidden],
            w2: Matrix::random(tags.len(), config.hidden, 0.1, &mut rng),
            b2: vec![0.0; tags.len()],
            tags,
            lr: config.slot_learning_rate as f32,
            adam: Adam::new(),
        }
    }

    fn forward(&self, feats: &[usize; WINDOW]) -> (Vec<f32>, Vec<f32>, Vec<f64>) {
        let d = self.embed.cols;
        let mut x = vec![0.0; WINDOW * d];
        for (k, &f) in feats.iter().enumerate() {
            x[k * d..(k + 1) * d].copy_from_slice(self.embed.row(f));
        }
        let mut h = vec![0.0; self.b1.len()];
        self.w1.affine(&x, &self.b1, &mut h);
        h.iter_mut().for_each(|v| *v = v.tanh());
        let mut logits = vec![0.0; self.tags.len()];
        self.w2.affine(&h, &self.b2, &mut logits);
        (x, h, log_softmax(&logits))
    }

    fn tag(&self, utterance: &str) -> Vec<String> {
        let words = tokenize(utterance);
        (0..words.len())
            .map(|i| {
                let (_, _, lp) = self.forward(&token_features(&words, i, self.buckets));
                let best = (0..lp.len()).fold(0, |b, j| if lp[j] > lp[b] { j } else { b });
                self.tags[best].clone()
            })
            .collect()
    }
}

impl Learner for SlotTagger {
    fn task(&self) -> TaskKind {
        TaskKind::SlotTagging
    }

    fn output_size(&self) -> usize {
        self.tags.len()
    }

    fn train_step(&mut self, batch: &[LabeledExample]) -> Result<f64, LearnerError> {
        if batch.is_empty() {
            return Err(LearnerError::EmptyBatch);
        }
        let d = self.embed.cols;
        let mut g_embed = Matrix::zeros(self.embed.rows, d);
        let mut g_w1 = Matrix::zeros(self.w1.rows, self.w1.cols);
        let mut g_b1 = vec![0.0f32; self.b1.len()];
        let mut g_w2 = Matrix::zeros(self.w2.rows, self.w2.cols);
        let mut g_b2 = vec![0.0f32; self.b2.len()];
        let tokens_total: usize = batch.iter().map(|e| e.tokens().len()).sum();
        let scale = 1.0 / tokens_total.max(1) as f32;
        let mut loss = 0.0;
        for example in batch {
            let Some(gold) = &example.iob_tags else { continue };
            let words = tokenize(&example.utterance);
            for (i, tag) in gold.iter().enumerate().take(words.len()) {
                let target = self.tags.iter().position(|t| t == tag).unwrap_or(0);
                let feats = token_features(&words, i, self.buckets);
                let (x, h, lp) = self.forward(&feats);
                loss -= lp[target];
                let mut dl: Vec<f32> = lp.iter().map(|l| -(l.exp() as f32) * scale).collect();
                dl[target] += scale;
                g_w2.add_outer(&dl, &h);
                axpy(1.0, &dl, &mut g_b2);
                let mut dh = vec![0.0; h.len()];
                self.w2.transpose_mul_add(&dl, &mut dh);
                for (g, hv) in dh.iter_mut().zip(&h) {
                    *g *= 1.0 - hv * hv;
                }
                g_w1.add_outer(&dh, &x);
                axpy(1.0, &dh, &mut g_b1);
                let mut dx = vec![0.0; x.len()];
                self.w1.transpose_mul_add(&dh, &mut dx);
                for (k, &f) in feats.iter().enumerate() {
                    axpy(1.0, &dx[k * d..(k + 1) * d], g_embed.row_mut(f));
                }
            }
        }
        self.adam.begin_step();
        self.adam.update(0, self.lr, &mut self.embed.data, &g_embed.data);
        self.adam.update(1, self.lr, &mut self.w1.data, &g_w1.data);
        self.adam.update(2, self.lr, &mut self.b1, &g_b1);
        self.adam.update(3, self.lr, &mut self.w2.data, &g_w2.data);
        self.adam.update(4, self.lr, &mut self.b2, &g_b2);
        Ok(loss * scale as f64)
    }

    fn predict(&self, utterance: &str) -> Prediction {
        Prediction::Tags(self.tag(utterance))
    }

    fn example_performance(&self, example: &LabeledExample) -> f64 {
        match &example.iob_tags {
            Some(gold) => token_f1(gold, &self.tag(&example.utterance)),
            None => 0.0,
        }
    }

    fn evaluate(&self, corpus: &Corpus) -> Result<Evaluation, LearnerError> {
        check_corpus(TaskKind::SlotTagging, corpus)?;
        let gold: Vec<Vec<String>> = corpus
            .examples
            .iter()
            .map(|e| e.iob_tags.clone().unwrap_or_else(|| vec!["O".into(); e.tokens().len()]))
            .collect();
        let predicted: Vec<Vec<String>> = corpus.examples.iter().map(|e| self.tag(&e.utterance)).collect();
        let per_example = gold
            .iter()
            .zip(&predicted)
            .map(|(g, p)| span_f1(std::slice::from_ref(g), std::slice::from_ref(p)))
            .collect();
        Ok(Evaluation {
            metric: span_f1(&gold, &predicted),
            per_example,
        })
    }
}
