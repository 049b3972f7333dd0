//! Task learners behind one interface. A fresh learner is spawned for every
//! meta-iteration, trained on curriculum batches and evaluated on a corpus.

mod dialogue;
mod intent;
pub mod metrics;
mod tagger;
mod vectors;

pub use dialogue::DialogueLearner;
pub use intent::IntentClassifier;
pub use tagger::SlotTagger;
pub use vectors::WordVectors;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::datamodel::{LabeledExample, TaskKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnerError {
    #[error("label space of kind {space} does not fit task {task}")]
    LabelSpaceMismatch { task: TaskKind, space: &'static str },
    #[error("label space is empty")]
    EmptyLabelSpace,
    #[error("cannot evaluate on an empty corpus")]
    EmptyCorpus,
    #[error("corpus task {corpus} differs from learner task {learner}")]
    TaskMismatch { learner: TaskKind, corpus: TaskKind },
    #[error("non-finite training loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("training batch is empty")]
    EmptyBatch,
}

/// The output space a learner is built for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "labels", rename_all = "snake_case")]
pub enum LabelSpace {
    Intents(Vec<String>),
    /// Slot names in phrase form.
    SlotNames(Vec<String>),
    /// Word vocabulary of the responder.
    Vocabulary(Vec<String>),
}

impl LabelSpace {
    fn kind(&self) -> &'static str {
        match self {
            LabelSpace::Intents(_) => "intents",
            LabelSpace::SlotNames(_) => "slot_names",
            LabelSpace::Vocabulary(_) => "vocabulary",
        }
    }

    /// Label space of a task derived from the seed and validation corpora.
    pub fn for_corpora(task: TaskKind, corpora: &[&Corpus]) -> Self {
        let mut set = std::collections::BTreeSet::new();
        for c in corpora {
            match task {
                TaskKind::DialogueResponse => {
                    for e in &c.examples {
                        set.extend(e.label.split_whitespace().map(String::from));
                        set.extend(e.utterance.split_whitespace().map(String::from));
                    }
                }
                _ => set.extend(c.label_space()),
            }
        }
        let labels: Vec<String> = set.into_iter().collect();
        match task {
            TaskKind::IntentDetection => LabelSpace::Intents(labels),
            TaskKind::SlotTagging => LabelSpace::SlotNames(labels),
            TaskKind::DialogueResponse => LabelSpace::Vocabulary(labels),
        }
    }

    pub fn labels(&self) -> &[String] {
        match self {
            LabelSpace::Intents(l) | LabelSpace::SlotNames(l) | LabelSpace::Vocabulary(l) => l,
        }
    }

    /// Whether a generated example's label can be learned from.
    pub fn admits(&self, example: &LabeledExample) -> bool {
        match self {
            LabelSpace::Intents(l) => l.contains(&example.label),
            LabelSpace::SlotNames(l) => crate::corpus::slot_names_of(example).iter().all(|n| l.contains(n)),
            LabelSpace::Vocabulary(_) => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    pub intent_learning_rate: f64,
    pub slot_learning_rate: f64,
    pub dialogue_learning_rate: f64,
    pub hash_buckets: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    /// Initialize word embeddings from vectors fitted on unlabeled domain
    /// text, when the dataset provides any.
    pub pretrained_vectors: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            intent_learning_rate: 3e-3,
            slot_learning_rate: 1e-4,
            dialogue_learning_rate: 1e-4,
            hash_buckets: 4096,
            embed_dim: 32,
            hidden: 64,
            pretrained_vectors: true,
        }
    }
}

/// A learner's prediction for one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    Intent(String),
    Tags(Vec<String>),
    Response(String),
}

/// Corpus metric plus per-example outcomes, all in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metric: f64,
    pub per_example: Vec<f64>,
}

pub trait Learner {
    fn task(&self) -> TaskKind;

    /// Width of the output layer.
    fn output_size(&self) -> usize;

    /// One optimizer step on `batch`; returns the mean loss before the step.
    fn train_step(&mut self, batch: &[LabeledExample]) -> Result<f64, LearnerError>;

    fn predict(&self, utterance: &str) -> Prediction;

    /// Performance on a single example in `[0, 1]`: correctness for intents,
    /// token F1 for slots, `exp(-loss)` for dialogue.
    fn example_performance(&self, example: &LabeledExample) -> f64;

    /// Accuracy, span micro F1 or `exp(-mean token loss)` over `corpus`.
    fn evaluate(&self, corpus: &Corpus) -> Result<Evaluation, LearnerError>;
}

/// A freshly initialized learner for `task`.
pub fn spawn(
    task: TaskKind,
    label_space: &LabelSpace,
    rng_seed: u64,
    config: &LearnerConfig,
) -> Result<Box<dyn Learner>, LearnerError> {
    spawn_with(task, label_space, rng_seed, config, None)
}

/// [`spawn`] with optional pretrained word vectors for the input embeddings.
pub fn spawn_with(
    task: TaskKind,
    label_space: &LabelSpace,
    rng_seed: u64,
    config: &LearnerConfig,
    vectors: Option<&WordVectors>,
) -> Result<Box<dyn Learner>, LearnerError> {
    if label_space.labels().is_empty() {
        return Err(LearnerError::EmptyLabelSpace);
    }
    match (task, label_space) {
        (TaskKind::IntentDetection, LabelSpace::Intents(l)) => Ok(Box::new(IntentClassifier::with_vectors(
            l.clone(),
            rng_seed,
            config,
            vectors,
        ))),
        (TaskKind::SlotTagging, LabelSpace::SlotNames(l)) => {
            Ok(Box::new(SlotTagger::with_vectors(l, rng_seed, config, vectors)))
        }
        (TaskKind::DialogueResponse, LabelSpace::Vocabulary(l)) => {
            Ok(Box::new(DialogueLearner::new(l, rng_seed, config)))
        }
        (task, space) => Err(LearnerError::LabelSpaceMismatch {
            task,
            space: space.kind(),
        }),
    }
}

/// Trains on up to `budget` batches; returns the per-step loss curve.
pub fn train<I>(learner: &mut dyn Learner, batches: I, budget: usize) -> Result<Vec<f64>, LearnerError>
where
    I: IntoIterator<Item = Vec<LabeledExample>>,
{
    let mut curve = Vec::new();
    for (step, batch) in batches.into_iter().take(budget).enumerate() {
        let loss = learner.train_step(&batch)?;
        if !loss.is_finite() {
            return Err(LearnerError::NonFiniteLoss { step });
        }
        curve.push(loss);
    }
    Ok(curve)
}

/// Validation metric, per-datapoint performance and loss curve of one
/// meta-iteration's learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerReport {
    pub p_meta: f64,
    pub per_datapoint: BTreeMap<u64, f64>,
    pub train_loss_curve: Vec<f64>,
    pub iterations_used: usize,
}

pub(crate) fn check_corpus(task: TaskKind, corpus: &Corpus) -> Result<(), LearnerError> {
    if corpus.is_empty() {
        return Err(LearnerError::EmptyCorpus);
    }
    if corpus.task != task {
        return Err(LearnerError::TaskMismatch {
            learner: task,
            corpus: corpus.task,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{intent_fixture, slot_fixture, SplitTag};

    fn space(task: TaskKind) -> LabelSpace {
        let d = match task {
            TaskKind::SlotTagging => slot_fixture(0),
            _ => intent_fixture(0),
        };
        LabelSpace::for_corpora(task, &[&d.train])
    }

    #[test]
    fn output_shapes() {
        let cfg = LearnerConfig::default();
        let intents = spawn(TaskKind::IntentDetection, &space(TaskKind::IntentDetection), 0, &cfg).unwrap();
        assert_eq!(intents.output_size(), 5);
        let slots = spawn(TaskKind::SlotTagging, &space(TaskKind::SlotTagging), 0, &cfg).unwrap();
        assert_eq!(slots.output_size(), 13);
    }

    #[test]
    fn mismatched_label_space_is_rejected() {
        let cfg = LearnerConfig::default();
        assert!(spawn(TaskKind::SlotTagging, &space(TaskKind::IntentDetection), 0, &cfg).is_err());
        assert!(spawn(TaskKind::IntentDetection, &LabelSpace::Intents(vec![]), 0, &cfg).is_err());
    }

    #[test]
    fn same_seed_same_predictions() {
        let cfg = LearnerConfig::default();
        let s = space(TaskKind::IntentDetection);
        let a = spawn(TaskKind::IntentDetection, &s, 7, &cfg).unwrap();
        let b = spawn(TaskKind::IntentDetection, &s, 7, &cfg).unwrap();
        let d = intent_fixture(0);
        assert_eq!(a.evaluate(&d.validation).unwrap(), b.evaluate(&d.validation).unwrap());
    }

    #[test]
    fn zero_budget_leaves_learner_untouched() {
        let cfg = LearnerConfig::default();
        let d = intent_fixture(0);
        let s = space(TaskKind::IntentDetection);
        let mut a = spawn(TaskKind::IntentDetection, &s, 1, &cfg).unwrap();
        let before = a.evaluate(&d.validation).unwrap();
        let curve = train(a.as_mut(), vec![d.train.examples[..10].to_vec()], 0).unwrap();
        assert!(curve.is_empty());
        assert_eq!(a.evaluate(&d.validation).unwrap(), before);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let cfg = LearnerConfig::default();
        let a = spawn(TaskKind::IntentDetection, &space(TaskKind::IntentDetection), 1, &cfg).unwrap();
        let empty = Corpus::new(TaskKind::IntentDetection, SplitTag::Validation, vec![]);
        assert_eq!(a.evaluate(&empty), Err(LearnerError::EmptyCorpus));
    }
}
