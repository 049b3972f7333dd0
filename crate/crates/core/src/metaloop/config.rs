//! Experiment configuration: one TOML document covering data, loop,
//! generator, learner and reward settings. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{
    dialogue_fixture, intent_fixture, slot_fixture, stratified_sample, Corpus, Dataset, SampleReport, SampleSpec,
};
use crate::datamodel::{MetaConfig, TaskKind};
use crate::generator::GeneratorConfig;
use crate::learner::LearnerConfig;
use crate::reward::KlController;
use crate::wireformat::SeparatorSet;

use super::RunError;

/// One training condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Generator pretraining, generation and policy updates.
    GcnPlusRl,
    /// Generator pretraining and generation without policy updates.
    GcnMinusRl,
    /// Learner trained on the seed only.
    Baseline,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Baseline, Mode::GcnMinusRl, Mode::GcnPlusRl];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::GcnPlusRl => "gcn_plus_rl",
            Mode::GcnMinusRl => "gcn_minus_rl",
            Mode::Baseline => "baseline",
        }
    }

    /// Display name used in tables.
    pub fn label(self) -> &'static str {
        match self {
            Mode::GcnPlusRl => "GCN+RL",
            Mode::GcnMinusRl => "GCN-RL",
            Mode::Baseline => "Baseline",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Modes an experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSelection {
    GcnPlusRl,
    GcnMinusRl,
    Baseline,
    /// All three modes on the same seeds.
    Compare,
}

impl ModeSelection {
    pub fn modes(self) -> Vec<Mode> {
        match self {
            ModeSelection::GcnPlusRl => vec![Mode::GcnPlusRl],
            ModeSelection::GcnMinusRl => vec![Mode::GcnMinusRl],
            ModeSelection::Baseline => vec![Mode::Baseline],
            ModeSelection::Compare => Mode::ALL.to_vec(),
        }
    }
}

/// Where the labeled data comes from and how the seed is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// Manifest path, relative to the configuration file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Built-in synthetic dataset, used when no manifest is given.
    pub fixture: TaskKind,
    pub fixture_seed: u64,
    /// Percentage of each training class kept as seed, in (0, 100].
    pub sample_percent: f64,
    pub sample_seed: u64,
    /// Seed of the 80/20 split used when a manifest has no validation file.
    pub split_seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            fixture: TaskKind::IntentDetection,
            fixture_seed: 0,
            sample_percent: 1.0,
            sample_seed: 0,
            split_seed: 0,
        }
    }
}

/// Execution settings that do not change results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExecutionConfig {
    /// Runs (mode x seed) executed concurrently.
    pub workers: usize,
    /// Write a resumable checkpoint after every meta-iteration.
    pub checkpoint: bool,
    /// Final generated data parsing below this rate flags the run degenerate.
    pub min_parse_rate: f64,
}

impl Default for ExecutionConfig {
    fn default() -> Self {
        Self {
            workers: 1,
            checkpoint: true,
            min_parse_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mode: ModeSelection,
    pub dataset: DatasetConfig,
    pub meta: MetaConfig,
    pub generator: GeneratorConfig,
    pub learner: LearnerConfig,
    pub kl: KlController,
    pub separators: SeparatorSet,
    pub execution: ExecutionConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_task(TaskKind::IntentDetection)
    }
}

fn bad(key: &str, message: impl fmt::Display) -> RunError {
    RunError::Config(format!("{key}: {message}"))
}

impl ExperimentConfig {
    pub fn for_task(task: TaskKind) -> Self {
        Self {
            mode: ModeSelection::Compare,
            dataset: DatasetConfig {
                fixture: task,
                ..DatasetConfig::default()
            },
            meta: MetaConfig::for_task(task),
            generator: GeneratorConfig::default(),
            learner: LearnerConfig::default(),
            kl: KlController::default(),
            separators: SeparatorSet::default(),
            execution: ExecutionConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        let config: Self = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn read(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// The fully expanded configuration, every default included.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.meta.validate().map_err(|e| bad("meta", e))?;
        let d = &self.dataset;
        if !(d.sample_percent > 0.0 && d.sample_percent <= 100.0) {
            return Err(bad(
                "dataset.sample_percent",
                format!("{} is outside (0, 100]", d.sample_percent),
            ));
        }
        let e = &self.execution;
        if e.workers == 0 {
            return Err(bad("execution.workers", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&e.min_parse_rate) {
            return Err(bad(
                "execution.min_parse_rate",
                format!("{} is outside [0, 1]", e.min_parse_rate),
            ));
        }
        let kl = &self.kl;
        if !(kl.beta.is_finite() && kl.beta >= 0.0) {
            return Err(bad("kl.beta", format!("{} must be finite and non-negative", kl.beta)));
        }
        if !(kl.target_kl > 0.0 && kl.horizon > 0.0) {
            return Err(bad("kl", "target_kl and horizon must be positive"));
        }
        self.separators.check().map_err(|e| bad("separators", e))?;
        let g = &self.generator;
        let s = &g.sampler;
        if !(s.temperature > 0.0) {
            return Err(bad("generator.sampler.temperature", "must be positive"));
        }
        if !(s.top_p > 0.0 && s.top_p <= 1.0) {
            return Err(bad("generator.sampler.top_p", "must lie in (0, 1]"));
        }
        if s.max_tokens == 0 {
            return Err(bad("generator.sampler.max_tokens", "must be at least 1"));
        }
        let p = &g.ppo;
        if p.minibatch_size == 0 {
            return Err(bad("generator.ppo.minibatch_size", "must be at least 1"));
        }
        if !(p.clip_ratio > 0.0 && p.clip_ratio < 1.0) {
            return Err(bad("generator.ppo.clip_ratio", "must lie in (0, 1)"));
        }
        for (key, lr) in [
            ("generator.ppo.learning_rate", p.learning_rate),
            ("generator.pretrain.learning_rate", g.pretrain.learning_rate),
            ("learner.intent_learning_rate", self.learner.intent_learning_rate),
            ("learner.slot_learning_rate", self.learner.slot_learning_rate),
            ("learner.dialogue_learning_rate", self.learner.dialogue_learning_rate),
        ] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(bad(key, format!("{lr} must be positive")));
            }
        }
        if g.pretrain.batch_size == 0 {
            return Err(bad("generator.pretrain.batch_size", "must be at least 1"));
        }
        let m = &g.model;
        if m.embed_dim == 0 || m.context == 0 || m.hidden == 0 {
            return Err(bad("generator.model", "dimensions must be at least 1"));
        }
        let l = &self.learner;
        if l.hash_buckets == 0 || l.embed_dim == 0 || l.hidden == 0 {
            return Err(bad("learner", "dimensions must be at least 1"));
        }
        Ok(())
    }
}

/// Splits ready for an experiment: the sampled seed, the full training set
/// (only read for creativity statistics), validation and test.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub task: TaskKind,
    pub seed: Corpus,
    pub full_train: Corpus,
    pub validation: Corpus,
    pub test: Corpus,
    pub domain_text: Vec<String>,
    pub sample: SampleReport,
}

impl PreparedData {
    /// Loads the configured dataset and draws the seed. Relative manifest
    /// paths resolve against `base`.
    pub fn load(config: &DatasetConfig, base: &Path) -> Result<Self, RunError> {
        let dataset = match &config.manifest {
            Some(path) => Dataset::load(&base.join(path), config.split_seed)?,
            None => match config.fixture {
                TaskKind::IntentDetection => intent_fixture(config.fixture_seed),
                TaskKind::SlotTagging => slot_fixture(config.fixture_seed),
                TaskKind::DialogueResponse => dialogue_fixture(config.fixture_seed),
            }
            .into_dataset(),
        };
        Self::from_dataset(dataset, config.sample_percent, config.sample_seed)
    }

    pub fn from_dataset(dataset: Dataset, sample_percent: f64, sample_seed: u64) -> Result<Self, RunError> {
        let sampled = stratified_sample(&dataset.train, &SampleSpec::new(sample_percent, sample_seed))?;
        if dataset.validation.is_empty() {
            return Err(RunError::Config("dataset: validation split is empty".into()));
        }
        if dataset.test.is_empty() {
            return Err(RunError::Config("dataset: test split is empty".into()));
        }
        Ok(Self {
            task: dataset.task,
            seed: sampled.corpus,
            full_train: dataset.train,
            validation: dataset.validation,
            test: dataset.test,
            domain_text: dataset.domain_text,
            sample: sampled.report,
        })
    }
}
