//! Shared domain types: labeled examples, generated datapoints and the
//! meta-loop configuration.

use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::reward::RewardRecord;
use crate::wireformat::{AlignmentFailure, Malformed, SeparatorSet};

/// Token identifier inside a language-model backend vocabulary.
pub type TokenId = u32;

/// The conversational task a corpus, prompt scheme or learner belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    IntentDetection,
    SlotTagging,
    DialogueResponse,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [
        TaskKind::IntentDetection,
        TaskKind::SlotTagging,
        TaskKind::DialogueResponse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::IntentDetection => "intent_detection",
            TaskKind::SlotTagging => "slot_tagging",
            TaskKind::DialogueResponse => "dialogue_response",
        }
    }

    /// Name of the metric reported for this task.
    pub fn metric_name(self) -> &'static str {
        match self {
            TaskKind::IntentDetection => "accuracy",
            TaskKind::SlotTagging => "span_f1",
            TaskKind::DialogueResponse => "inverse_perplexity",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "intent_detection" | "intent" => Ok(TaskKind::IntentDetection),
            "slot_tagging" | "slot" | "slots" => Ok(TaskKind::SlotTagging),
            "dialogue_response" | "dialogue" => Ok(TaskKind::DialogueResponse),
            other => Err(format!("unknown task kind `{other}`")),
        }
    }
}

/// Label used for slot-tagging examples that carry no slots.
pub const EMPTY_SLOT_LABEL: &str = "generic";

/// NFC-normalizes, lowercases and collapses runs of whitespace.
pub fn normalize_text(text: &str) -> String {
    let lowered: String = text.nfc().collect::<String>().to_lowercase();
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace())
}

/// Whitespace tokenization with punctuation marks detached into their own
/// tokens. Used for IOB alignment, creativity metrics and the word-level
/// backends.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut start = None;
        for (i, c) in chunk.char_indices() {
            if is_punctuation(c) {
                if let Some(s) = start.take() {
                    tokens.push(&chunk[s..i]);
                }
                tokens.push(&chunk[i..i + c.len_utf8()]);
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            tokens.push(&chunk[s..]);
        }
    }
    tokens
}

/// Whether a token consists only of punctuation.
pub fn is_punctuation_token(token: &str) -> bool {
    !token.is_empty() && token.chars().all(is_punctuation)
}

/// One supervised example: a label and the utterance realizing it.
///
/// For slot tagging the label is the space-joined `slot value slot value ...`
/// sequence with slot names in phrase form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledExample {
    pub task: TaskKind,
    pub label: String,
    pub utterance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iob_tags: Option<Vec<String>>,
}

impl LabeledExample {
    /// Builds an example with normalized text. An empty slot-tagging label
    /// becomes [`EMPTY_SLOT_LABEL`].
    pub fn new(task: TaskKind, label: &str, utterance: &str) -> Self {
        let mut label = normalize_text(label);
        if task == TaskKind::SlotTagging && label.is_empty() {
            label = EMPTY_SLOT_LABEL.to_string();
        }
        Self {
            task,
            label,
            utterance: normalize_text(utterance),
            iob_tags: None,
        }
    }

    pub fn with_tags(mut self, tags: Vec<String>) -> Self {
        self.iob_tags = Some(tags);
        self
    }

    pub fn tokens(&self) -> Vec<&str> {
        tokenize(&self.utterance)
    }
}

/// Which text field of an example a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Label,
    Utterance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    #[error("utterance is empty")]
    EmptyUtterance,
    #[error("label is empty")]
    EmptyLabel,
    #[error("{tags} tags for {tokens} utterance tokens")]
    TagCountMismatch { tags: usize, tokens: usize },
    #[error("tag `{tag}` at position {position} is not O, B-x or I-x")]
    MalformedTag { position: usize, tag: String },
    #[error("tag `{tag}` at position {position} does not continue a span of the same slot")]
    DanglingInside { position: usize, tag: String },
    #[error("{field:?} contains reserved separator `{separator}`")]
    ContainsSeparator { field: Field, separator: String },
}

/// A parsed IOB tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Iob<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

pub fn parse_tag(tag: &str) -> Option<Iob<'_>> {
    if tag == "O" {
        return Some(Iob::Outside);
    }
    let (prefix, name) = tag.split_at_checked(2)?;
    if name.is_empty() {
        return None;
    }
    match prefix {
        "B-" => Some(Iob::Begin(name)),
        "I-" => Some(Iob::Inside(name)),
        _ => None,
    }
}

/// Single left-to-right well-formedness scan of an IOB sequence.
pub fn iob_violations<S: AsRef<str>>(tags: &[S]) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut open: Option<&str> = None;
    for (position, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        match parse_tag(tag) {
            None => {
                violations.push(Violation::MalformedTag {
                    position,
                    tag: tag.to_string(),
                });
                open = None;
            }
            Some(Iob::Outside) => open = None,
            Some(Iob::Begin(name)) => open = Some(name),
            Some(Iob::Inside(name)) => {
                if open != Some(name) {
                    violations.push(Violation::DanglingInside {
                        position,
                        tag: tag.to_string(),
                    });
                }
                open = Some(name);
            }
        }
    }
    violations
}

pub fn is_well_formed_iob<S: AsRef<str>>(tags: &[S]) -> bool {
    iob_violations(tags).is_empty()
}

/// Checks every invariant of `example` against the default separators.
pub fn validate_example(example: &LabeledExample) -> Result<(), Vec<Violation>> {
    validate_example_with(example, &SeparatorSet::default())
}

/// Checks every invariant of `example`, reporting all violations found.
pub fn validate_example_with(example: &LabeledExample, separators: &SeparatorSet) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    if example.utterance.trim().is_empty() {
        violations.push(Violation::EmptyUtterance);
    }
    if example.label.trim().is_empty() && example.task != TaskKind::SlotTagging {
        violations.push(Violation::EmptyLabel);
    }
    for (field, text) in [(Field::Label, &example.label), (Field::Utterance, &example.utterance)] {
        if let Some(separator) = separators.find_in(text) {
            violations.push(Violation::ContainsSeparator {
                field,
                separator: separator.to_string(),
            });
        }
    }
    if let Some(tags) = &example.iob_tags {
        let tokens = example.tokens().len();
        if tags.len() != tokens {
            violations.push(Violation::TagCountMismatch {
                tags: tags.len(),
                tokens,
            });
        }
        violations.extend(iob_violations(tags));
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Why a generated datapoint cannot be used to train a learner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "defect", rename_all = "snake_case")]
pub enum Defect {
    Malformed { reason: Malformed },
    Misaligned { failure: AlignmentFailure },
    UnknownLabel { label: String },
    Invalid { violations: Vec<Violation> },
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Defect::Malformed { reason } => write!(f, "malformed: {reason}"),
            Defect::Misaligned { failure } => write!(f, "misaligned: {failure}"),
            Defect::UnknownLabel { label } => write!(f, "label `{label}` outside the label space"),
            Defect::Invalid { violations } => write!(f, "{} validation violations", violations.len()),
        }
    }
}

/// One sample emitted by the generator, with the log-probabilities of its
/// generated tokens under the policy and the reference model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedDatapoint {
    pub id: u64,
    pub meta_iteration: usize,
    pub raw_text: String,
    pub prompt_tokens: Vec<TokenId>,
    pub generated_tokens: Vec<TokenId>,
    pub parsed: Option<LabeledExample>,
    pub defect: Option<Defect>,
    pub token_logprobs_policy: Vec<f64>,
    pub token_logprobs_reference: Vec<f64>,
    pub reward: Option<RewardRecord>,
}

impl GeneratedDatapoint {
    /// The parsed example if the datapoint can be handed to a learner.
    pub fn usable(&self) -> Option<&LabeledExample> {
        match (&self.parsed, &self.defect) {
            (Some(example), None) => Some(example),
            _ => None,
        }
    }

    pub fn is_parsed(&self) -> bool {
        self.parsed.is_some()
    }

    /// Sum over generated tokens of `log pi - log rho`.
    pub fn log_ratio_sum(&self) -> f64 {
        self.token_logprobs_policy
            .iter()
            .zip(&self.token_logprobs_reference)
            .map(|(p, r)| p - r)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("warmup_meta_iterations must satisfy 0 < I_warmup <= meta_iterations (got {warmup} of {meta})")]
    Warmup { warmup: usize, meta: usize },
    #[error("generator_batch_size must be at least 1")]
    BatchSize,
    #[error("learner_iterations_per_meta must be at least 1")]
    LearnerIterations,
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfUnitRange { name: &'static str, value: String },
    #[error("at least one seed is required")]
    NoSeeds,
}

/// Parameters of the outer training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaConfig {
    pub meta_iterations: usize,
    pub learner_iterations_per_meta: usize,
    pub warmup_meta_iterations: usize,
    pub generator_batch_size: usize,
    /// Early-stop threshold on validation performance. Values of 0 or 1
    /// disable early stopping.
    pub performance_threshold: f64,
    pub alpha: f64,
    pub seeds: Vec<u64>,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self::for_task(TaskKind::IntentDetection)
    }
}

impl MetaConfig {
    pub fn for_task(task: TaskKind) -> Self {
        let meta_iterations = 15;
        Self {
            meta_iterations,
            learner_iterations_per_meta: 100,
            warmup_meta_iterations: meta_iterations / 3,
            generator_batch_size: match task {
                TaskKind::SlotTagging => 50,
                _ => 10,
            },
            performance_threshold: 1.0,
            alpha: 0.5,
            seeds: vec![0, 1, 2],
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.warmup_meta_iterations == 0 || self.warmup_meta_iterations > self.meta_iterations {
            return Err(ConfigError::Warmup {
                warmup: self.warmup_meta_iterations,
                meta: self.meta_iterations,
            });
        }
        if self.generator_batch_size == 0 {
            return Err(ConfigError::BatchSize);
        }
        if self.learner_iterations_per_meta == 0 {
            return Err(ConfigError::LearnerIterations);
        }
        for (name, value) in [
            ("alpha", self.alpha),
            ("performance_threshold", self.performance_threshold),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::OutOfUnitRange {
                    name,
                    value: value.to_string(),
                });
            }
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::NoSeeds);
        }
        Ok(())
    }

    /// Whether validation performance `p_meta` ends the training loop.
    pub fn reached_threshold(&self, p_meta: f64) -> bool {
        let eps = self.performance_threshold;
        eps > 0.0 && eps < 1.0 && p_meta >= eps
    }
}
