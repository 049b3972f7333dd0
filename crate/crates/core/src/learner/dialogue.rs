use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::perplexity_score;
use super::{check_corpus, Evaluation, Learner, LearnerConfig, LearnerError, Prediction};
use crate::corpus::Corpus;
use crate::datamodel::{LabeledExample, TaskKind, TokenId};
use crate::nn::{LmConfig, OptimizerKind, TinyLm, Vocabulary, WeightedTokens};

const BOS: &str = "<s>";
const SEP: &str = "<sep>";
const EOS: &str = "</s>";
const MAX_RESPONSE: usize = 32;

/// Responder: a small language model over `previous <sep> response </s>`
/// trained only on response tokens.
#[derive(Debug, Clone)]
pub struct DialogueLearner {
    lm: TinyLm,
    lr: f64,
}

impl DialogueLearner {
    pub fn new(vocabulary: &[String], seed: u64, config: &LearnerConfig) -> Self {
        let vocab = Vocabulary::build(&[BOS, SEP, EOS], vocabulary.iter().map(String::as_str));
        let lm_config = LmConfig {
            embed_dim: config.embed_dim,
            context: 3,
            hidden: config.hidden,
        };
        Self {
            lm: TinyLm::new(vocab, lm_config, &mut ChaCha8Rng::seed_from_u64(seed)),
            lr: config.dialogue_learning_rate,
        }
    }

    /// Token ids and the index of the first response token.
    fn encode(&self, example: &LabeledExample) -> (Vec<TokenId>, usize) {
        let v = self.lm.vocab();
        let mut ids = vec![v.id(BOS).unwrap()];
        ids.extend(v.encode(&example.label));
        ids.push(v.id(SEP).unwrap());
        let from = ids.len();
        ids.extend(v.encode(&example.utterance));
        ids.push(v.id(EOS).unwrap());
        (ids, from)
    }

    fn nll(&self, example: &LabeledExample) -> (f64, usize) {
        let (ids, from) = self.encode(example);
        let lp = self.lm.logprobs(&ids, from);
        (-lp.iter().sum::<f64>(), lp.len())
    }
}

impl Learner for DialogueLearner {
    fn task(&self) -> TaskKind {
        TaskKind::DialogueResponse
    }

    fn output_size(&self) -> usize {
        self.lm.vocab().len()
    }

    fn train_step(&mut self, batch: &[LabeledExample]) -> Result<f64, LearnerError> {
        if batch.is_empty() {
            return Err(LearnerError::EmptyBatch);
        }
        let encoded: Vec<(Vec<TokenId>, usize)> = batch.iter().map(|e| self.encode(e)).collect();
        let total: usize = encoded.iter().map(|(ids, from)| ids.len() - from).sum();
        let weights: Vec<Vec<f64>> = encoded
            .iter()
            .map(|(ids, from)| vec![1.0 / total as f64; ids.len() - from])
            .collect();
        let seqs: Vec<WeightedTokens<'_>> = encoded
            .iter()
            .zip(&weights)
            .map(|((ids, from), w)| WeightedTokens {
                tokens: ids,
                from: *from,
                weights: w,
            })
            .collect();
        Ok(-self.lm.ascend(&seqs, self.lr, OptimizerKind::Adam))
    }

    fn predict(&self, utterance: &str) -> Prediction {
        let v = self.lm.vocab();
        let mut prompt = vec![v.id(BOS).unwrap()];
        prompt.extend(v.encode(utterance));
        prompt.push(v.id(SEP).unwrap());
        let eos = v.id(EOS).unwrap();
        let mut dec = self.lm.start(&prompt);
        let mut out = Vec::new();
        for _ in 0..MAX_RESPONSE {
            let lp = self.lm.next_logprobs(&dec);
            let best = (0..lp.len()).fold(0, |b, j| if lp[j] > lp[b] { j } else { b }) as TokenId;
            if best == eos {
                break;
            }
            out.push(best);
            dec.push(&self.lm, best);
        }
        Prediction::Response(v.decode(&out))
    }

    fn example_performance(&self, example: &LabeledExample) -> f64 {
        let (nll, n) = self.nll(example);
        perplexity_score(nll / n.max(1) as f64)
    }

    fn evaluate(&self, corpus: &Corpus) -> Result<Evaluation, LearnerError> {
        check_corpus(TaskKind::DialogueResponse, corpus)?;
        let (mut total, mut count) = (0.0, 0);
        let mut per_example = Vec::with_capacity(corpus.len());
        for e in &corpus.examples {
            let (nll, n) = self.nll(e);
            total += nll;
            count += n;
            per_example.push(perplexity_score(nll / n.max(1) as f64));
        }
        Ok(Evaluation {
            metric: perplexity_score(total / count.max(1) as f64),
            per_example,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::dialogue_fixture;
    use crate::learner::{spawn, train, LabelSpace};

    #[test]
    fn training_raises_the_perplexity_score() {
        let d = dialogue_fixture(0);
        let space = LabelSpace::for_corpora(TaskKind::DialogueResponse, &[&d.train]);
        let cfg = LearnerConfig {
            dialogue_learning_rate: 3e-3,
            ..LearnerConfig::default()
        };
        let mut l = spawn(TaskKind::DialogueResponse, &space, 0, &cfg).unwrap();
        let before = l.evaluate(&d.validation).unwrap().metric;
        train(l.as_mut(), d.train.examples.chunks(16).map(<[_]>::to_vec).cycle(), 60).unwrap();
        let after = l.evaluate(&d.validation).unwrap().metric;
        assert!(after > before && (0.0..=1.0).contains(&after), "{before} -> {after}");
    }
}
