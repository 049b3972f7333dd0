//! The data generator: a language model fine-tuned on serialized seed data,
//! sampled with prompts, and updated with a clipped policy gradient against
//! per-datapoint rewards. A frozen reference copy anchors the KL penalty.

mod backend;
mod ppo;

pub use backend::{
    draw, load_backend, BackendError, LanguageModelBackend, Sampled, SamplingControls, TinyBackend, WeightedSequence,
    TINY_KIND,
};
pub use ppo::{ppo_step, PpoConfig, PpoSample, PpoStats};

use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::datamodel::{validate_example_with, Defect, GeneratedDatapoint, TaskKind};
use crate::nn::{LmConfig, OptimizerKind, TinyLm, Vocabulary};
use crate::reward::{terminal_scores, KlController};
use crate::wireformat::{align_iob, parse, serialize, SeparatorSet};

#[derive(Debug, thiserror::Error)]
pub enum GeneratorError {
    #[error("seed corpus is empty and cold start is disabled")]
    EmptySeed,
    #[error("seed example cannot be serialized: {0}")]
    Seed(String),
    #[error("datapoint {id} carries no reward")]
    MissingReward { id: u64 },
    #[error("update batch is empty")]
    EmptyBatch,
    #[error("sampling failed after {attempts} attempts: {source}")]
    Sampling { attempts: usize, source: BackendError },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Supervised pretraining settings. Text pretraining on unlabeled domain
/// sentences precedes fine-tuning on the serialized seed corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub text_steps: usize,
    pub seed_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            text_steps: 400,
            seed_steps: 300,
            batch_size: 16,
            learning_rate: 3e-3,
            optimizer: OptimizerKind::Adam,
        }
    }
}

/// Trainable group count as a function of the meta-iteration:
/// `initial + i_meta / every`, saturating at the number of groups.
/// `every = 0` keeps the count constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnfreezeSchedule {
    pub initial: usize,
    pub every: usize,
}

impl Default for UnfreezeSchedule {
    fn default() -> Self {
        Self { initial: 1, every: 3 }
    }
}

impl UnfreezeSchedule {
    pub fn groups_at(&self, i_meta: usize, group_count: usize) -> usize {
        let extra = if self.every == 0 { 0 } else { i_meta / self.every };
        (self.initial + extra).min(group_count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncMode {
    /// Reference becomes a frozen copy of the policy.
    PolicyToReference,
    /// Policy is reset to the reference parameters.
    ReferenceToPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyncConfig {
    pub mode: SyncMode,
    /// Meta-iterations between syncs; `None` never syncs.
    pub every: Option<usize>,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            mode: SyncMode::PolicyToReference,
            every: None,
        }
    }
}

impl SyncConfig {
    /// Whether a sync is due after meta-iteration `i_meta` completes.
    pub fn due(&self, i_meta: usize) -> bool {
        matches!(self.every, Some(k) if k > 0 && (i_meta + 1) % k == 0)
    }
}

/// How prompts are chosen when filling a generation pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStrategy {
    /// `<BOS>` only; the generator picks the label.
    Unconditional,
    /// `<BOS> label <GO>`, cycling through the label space.
    LabeledRoundRobin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub model: LmConfig,
    pub sampler: SamplingControls,
    pub ppo: PpoConfig,
    pub pretrain: PretrainConfig,
    pub unfreeze: UnfreezeSchedule,
    pub sync: SyncConfig,
    pub prompt: PromptStrategy,
    pub cold_start: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            model: LmConfig::default(),
            sampler: SamplingControls::default(),
            ppo: PpoConfig::default(),
            pretrain: PretrainConfig::default(),
            unfreeze: UnfreezeSchedule::default(),
            sync: SyncConfig::default(),
            prompt: PromptStrategy::Unconditional,
            cold_start: false,
        }
    }
}

/// Prompt for one generation call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptMode {
    Unconditional,
    Labeled(String),
    /// Starts a chain of responses at `previous`; each response becomes the
    /// next prompt.
    DialogueChain(String),
}

/// Policy, frozen reference and everything needed to sample and parse.
pub struct GeneratorState {
    pub policy: Box<dyn LanguageModelBackend>,
    pub reference: Box<dyn LanguageModelBackend>,
    pub config: GeneratorConfig,
    pub separators: SeparatorSet,
    pub task: TaskKind,
    /// Intents or phrase-form slot names generated labels must come from.
    pub label_space: Vec<String>,
    pub next_id: u64,
}

#[derive(Serialize, Deserialize)]
struct StoredState {
    config: GeneratorConfig,
    separators: SeparatorSet,
    task: TaskKind,
    label_space: Vec<String>,
    next_id: u64,
}

impl GeneratorState {
    pub fn new(
        policy: Box<dyn LanguageModelBackend>,
        config: GeneratorConfig,
        separators: SeparatorSet,
        task: TaskKind,
        label_space: Vec<String>,
    ) -> Self {
        let reference = policy.clone_frozen();
        Self {
            policy,
            reference,
            config,
            separators,
            task,
            label_space,
            next_id: 0,
        }
    }

    /// Generator over the built-in backend, with a vocabulary covering the
    /// separators and every word of `texts`.
    pub fn with_tiny_backend<'a, I>(
        config: GeneratorConfig,
        separators: SeparatorSet,
        task: TaskKind,
        label_space: Vec<String>,
        texts: I,
        rng: &mut dyn RngCore,
    ) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let vocab = Vocabulary::build(&separators.all(), texts);
        let lm = TinyLm::new(vocab, config.model, rng);
        Self::new(Box::new(TinyBackend::new(lm)), config, separators, task, label_space)
    }

    fn token(&self, text: &str) -> crate::datamodel::TokenId {
        self.policy
            .token_id(text)
            .expect("separators are part of the generator vocabulary")
    }

    fn supervised(
        &mut self,
        sequences: &[Vec<crate::datamodel::TokenId>],
        steps: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<f64>, GeneratorError> {
        let p = self.config.pretrain;
        self.policy.set_trainable_groups(self.policy.group_count());
        let mut curve = Vec::with_capacity(steps);
        for _ in 0..steps {
            let batch: Vec<Vec<_>> = (0..p.batch_size.max(1))
                .map(|_| sequences.choose(rng).expect("non-empty").clone())
                .collect();
            curve.push(self.policy.supervised_step(&batch, p.learning_rate, p.optimizer)?);
        }
        Ok(curve)
    }

    /// Language-model pretraining on unlabeled in-domain sentences framed as
    /// `<GO> sentence <EOS>`.
    pub fn pretrain_on_text(&mut self, texts: &[String], rng: &mut dyn RngCore) -> Result<Vec<f64>, GeneratorError> {
        if texts.is_empty() || self.config.pretrain.text_steps == 0 {
            return Ok(Vec::new());
        }
        let s = &self.separators;
        let sequences: Vec<Vec<_>> = texts
            .iter()
            .map(|t| self.policy.tokenize(&format!("{} {} {}", s.go, t, s.eos)))
            .collect();
        self.supervised(&sequences, self.config.pretrain.text_steps, rng)
    }

    /// Supervised fine-tuning on serialized seed examples; afterwards the
    /// reference becomes a frozen copy of the policy.
    pub fn pretrain_on_seed(&mut self, seed: &Corpus, rng: &mut dyn RngCore) -> Result<Vec<f64>, GeneratorError> {
        if seed.is_empty() {
            if !self.config.cold_start {
                return Err(GeneratorError::EmptySeed);
            }
            self.reference = self.policy.clone_frozen();
            return Ok(Vec::new());
        }
        let sequences = seed
            .examples
            .iter()
            .map(|e| {
                serialize(e, &self.separators)
                    .map(|text| self.policy.tokenize(&text))
                    .map_err(|err| GeneratorError::Seed(err.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let curve = self.supervised(&sequences, self.config.pretrain.seed_steps, rng)?;
        self.reference = self.policy.clone_frozen();
        Ok(curve)
    }

    fn prompt_text(&self, mode: &PromptMode, previous: &str) -> String {
        match mode {
            PromptMode::Unconditional => self.separators.unconditional_prompt(),
            PromptMode::Labeled(label) => self.separators.labeled_prompt(label),
            PromptMode::DialogueChain(_) => self.separators.labeled_prompt(previous),
        }
    }

    /// Samples `n` datapoints, recording log-probabilities under both the
    /// policy and the reference.
    pub fn generate_batch(
        &mut self,
        n: usize,
        mode: &PromptMode,
        meta_iteration: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<GeneratedDatapoint>, GeneratorError> {
        const ATTEMPTS: usize = 3;
        let eos = self.token(&self.separators.eos);
        let mut previous = match mode {
            PromptMode::DialogueChain(start) => start.clone(),
            _ => String::new(),
        };
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let prompt = self.policy.tokenize(&self.prompt_text(mode, &previous));
            let mut attempt = 0;
            let sampled = loop {
                match self.policy.sample(&prompt, &self.config.sampler, Some(eos), rng) {
                    Ok(s) => break s,
                    Err(e @ BackendError::Sampling { .. }) => {
                        attempt += 1;
                        if attempt == ATTEMPTS {
                            return Err(GeneratorError::Sampling {
                                attempts: ATTEMPTS,
                                source: e,
                            });
                        }
                    }
                    Err(e) => return Err(e.into()),
                }
            };
            let reference = self.reference.score(&prompt, &sampled.tokens);
            let full: Vec<_> = prompt.iter().chain(&sampled.tokens).copied().collect();
            let raw_text = self.policy.detokenize(&full);
            let mut datapoint = GeneratedDatapoint {
                id: self.next_id,
                meta_iteration,
                raw_text,
                prompt_tokens: prompt,
                generated_tokens: sampled.tokens,
                parsed: None,
                defect: None,
                token_logprobs_policy: sampled.logprobs,
                token_logprobs_reference: reference,
                reward: None,
            };
            self.next_id += 1;
            self.annotate(&mut datapoint);
            if let (PromptMode::DialogueChain(start), Some(e)) = (mode, &datapoint.parsed) {
                previous = if datapoint.defect.is_none() {
                    e.utterance.clone()
                } else {
                    start.clone()
                };
            }
            out.push(datapoint);
        }
        Ok(out)
    }

    /// Parses a datapoint's raw text, derives IOB tags for slot tagging and
    /// checks the label space.
    pub fn annotate(&self, datapoint: &mut GeneratedDatapoint) {
        let parsed = match parse(&datapoint.raw_text, &self.separators, self.task) {
            Ok(e) => e,
            Err(reason) => {
                datapoint.defect = Some(Defect::Malformed { reason });
                return;
            }
        };
        datapoint.defect = self.defect_of(&parsed).err();
        datapoint.parsed = Some(match (&datapoint.defect, self.task) {
            (None, TaskKind::SlotTagging) => {
                let tags = align_iob(&parsed.label, &parsed.utterance, &self.label_space).expect("checked");
                parsed.with_tags(tags)
            }
            _ => parsed,
        });
    }

    fn defect_of(&self, e: &crate::datamodel::LabeledExample) -> Result<(), Defect> {
        match self.task {
            TaskKind::IntentDetection if !self.label_space.contains(&e.label) => {
                return Err(Defect::UnknownLabel { label: e.label.clone() })
            }
            TaskKind::SlotTagging => {
                let tags = align_iob(&e.label, &e.utterance, &self.label_space)
                    .map_err(|failure| Defect::Misaligned { failure })?;
                let tagged = e.clone().with_tags(tags);
                return validate_example_with(&tagged, &self.separators)
                    .map_err(|violations| Defect::Invalid { violations });
            }
            _ => {}
        }
        validate_example_with(e, &self.separators).map_err(|violations| Defect::Invalid { violations })
    }

    /// Clipped policy-gradient update on rewarded datapoints. Terminal
    /// rewards are whitened `R_d` values with unusable datapoints at the
    /// batch minimum; every token is shaped by `-beta * (log pi - log rho)`.
    pub fn ppo_update(
        &mut self,
        batch: &[GeneratedDatapoint],
        controller: &KlController,
        rng: &mut dyn RngCore,
    ) -> Result<PpoStats, GeneratorError> {
        if batch.is_empty() {
            return Err(GeneratorError::EmptyBatch);
        }
        let records = batch
            .iter()
            .map(|d| d.reward.ok_or(GeneratorError::MissingReward { id: d.id }))
            .collect::<Result<Vec<_>, _>>()?;
        let r_d: Vec<f64> = records.iter().map(|r| r.r_d).collect();
        let usable: Vec<bool> = batch.iter().map(|d| d.usable().is_some()).collect();
        let terminal = terminal_scores(&r_d, &usable);
        let samples: Vec<PpoSample> = batch
            .iter()
            .zip(terminal)
            .map(|(d, score)| PpoSample {
                prompt: d.prompt_tokens.clone(),
                tokens: d.generated_tokens.clone(),
                old_logprobs: d.token_logprobs_policy.clone(),
                reference_logprobs: d.token_logprobs_reference.clone(),
                terminal_reward: score,
            })
            .collect();
        let mut stats = ppo_step(&mut self.policy, &samples, &self.config.ppo, controller.beta, rng);
        stats.mean_reward = records.iter().map(|r| r.final_reward).sum::<f64>() / records.len() as f64;
        Ok(stats)
    }

    pub fn advance_unfreeze(&mut self, i_meta: usize) {
        let n = self.config.unfreeze.groups_at(i_meta, self.policy.group_count());
        self.policy.set_trainable_groups(n);
    }

    pub fn sync_reference(&mut self) {
        match self.config.sync.mode {
            SyncMode::PolicyToReference => self.reference = self.policy.clone_frozen(),
            SyncMode::ReferenceToPolicy => {
                let groups = self.policy.trainable_groups();
                self.policy = self.reference.clone_box();
                self.policy.set_trainable_groups(groups);
            }
        }
    }

    /// Writes `policy/`, `reference/` and `generator.json` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), GeneratorError> {
        self.policy.save(&dir.join("policy"))?;
        self.reference.save(&dir.join("reference"))?;
        let stored = StoredState {
            config: self.config,
            separators: self.separators.clone(),
            task: self.task,
            label_space: self.label_space.clone(),
            next_id: self.next_id,
        };
        let json = serde_json::to_vec_pretty(&stored).map_err(BackendError::from)?;
        fs::write(dir.join("generator.json"), json).map_err(BackendError::from)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, GeneratorError> {
        let bytes = fs::read(dir.join("generator.json")).map_err(BackendError::from)?;
        let stored: StoredState = serde_json::from_slice(&bytes).map_err(BackendError::from)?;
        let policy = load_backend(&dir.join("policy"))?;
        let reference = load_backend(&dir.join("reference"))?;
        Ok(Self {
            policy,
            reference,
            config: stored.config,
            separators: stored.separators,
            task: stored.task,
            label_space: stored.label_space,
            next_id: stored.next_id,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{intent_fixture, stratified_sample, SampleSpec, SplitTag};
    use crate::datamodel::LabeledExample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(task: TaskKind, labels: &[&str], texts: &[&str], config: GeneratorConfig) -> GeneratorState {
        GeneratorState::with_tiny_backend(
            config,
            SeparatorSet::default(),
            task,
            labels.iter().map(|s| s.to_string()).collect(),
            texts.iter().copied(),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
    }

    #[test]
    fn memorizes_a_single_seed_example() {
        let config = GeneratorConfig {
            pretrain: PretrainConfig {
                seed_steps: 150,
                batch_size: 4,
                learning_rate: 1e-2,
                ..PretrainConfig::default()
            },
            ..GeneratorConfig::default()
        };
        let mut g = state(
            TaskKind::IntentDetection,
            &["flight"],
            &["flight what flights leave boston on friday"],
            config,
        );
        let seed = Corpus::new(
            TaskKind::IntentDetection,
            SplitTag::SeedTrain,
            vec![LabeledExample::new(
                TaskKind::IntentDetection,
                "flight",
                "what flights leave boston on friday",
            )],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        g.pretrain_on_seed(&seed, &mut rng).unwrap();
        let out = g
            .generate_batch(20, &PromptMode::Labeled("flight".into()), 0, &mut rng)
            .unwrap();
        let hits = out
            .iter()
            .filter(|d| d.usable().map(|e| e.utterance.as_str()) == Some("what flights leave boston on friday"))
            .count();
        assert!(hits >= 18, "{hits}/20");
        // Right after pretraining the reference is a clone of the policy.
        for d in &out {
            assert_eq!(d.token_logprobs_policy, d.token_logprobs_reference);
            assert_eq!(d.log_ratio_sum(), 0.0);
        }
    }

    #[test]
    fn empty_seed_needs_cold_start() {
        let mut g = state(TaskKind::IntentDetection, &["a"], &["a b"], GeneratorConfig::default());
        let empty = Corpus::new(TaskKind::IntentDetection, SplitTag::SeedTrain, vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            g.pretrain_on_seed(&empty, &mut rng),
            Err(GeneratorError::EmptySeed)
        ));
        g.config.cold_start = true;
        assert!(g.pretrain_on_seed(&empty, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn zero_requests_yield_nothing_and_truncation_is_malformed() {
        let mut g = state(
            TaskKind::IntentDetection,
            &["a"],
            &["a b c"],
            GeneratorConfig::default(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(g
            .generate_batch(0, &PromptMode::Unconditional, 0, &mut rng)
            .unwrap()
            .is_empty());
        g.config.sampler.max_tokens = 1;
        for d in g.generate_batch(30, &PromptMode::Unconditional, 0, &mut rng).unwrap() {
            assert_eq!(d.token_logprobs_policy.len(), d.generated_tokens.len());
            assert_eq!(d.token_logprobs_reference.len(), d.generated_tokens.len());
            assert!(d.parsed.is_none());
            assert!(matches!(d.defect, Some(Defect::Malformed { .. })));
        }
    }

    #[test]
    fn annotation_flags_unknown_labels_and_tags_slots() {
        let g = state(
            TaskKind::IntentDetection,
            &["flight"],
            &["x"],
            GeneratorConfig::default(),
        );
        let mut d = GeneratedDatapoint {
            id: 0,
            meta_iteration: 0,
            raw_text: "<BOS> hotel <GO> book a room <EOS>".into(),
            prompt_tokens: vec![],
            generated_tokens: vec![],
            parsed: None,
            defect: None,
            token_logprobs_policy: vec![],
            token_logprobs_reference: vec![],
            reward: None,
        };
        g.annotate(&mut d);
        assert_eq!(d.defect, Some(Defect::UnknownLabel { label: "hotel".into() }));
        assert!(d.usable().is_none());

        let s = state(TaskKind::SlotTagging, &["city"], &["x"], GeneratorConfig::default());
        d.raw_text = "<BOS> city boston <GO> fly to boston <EOS>".into();
        s.annotate(&mut d);
        assert_eq!(d.defect, None);
        assert_eq!(
            d.usable().unwrap().iob_tags.as_deref(),
            Some(&["O".to_string(), "O".into(), "B-city".into()][..])
        );
        d.raw_text = "<BOS> city denver <GO> fly to boston <EOS>".into();
        s.annotate(&mut d);
        assert!(matches!(d.defect, Some(Defect::Misaligned { .. })));
    }

    #[test]
    fn pretrained_generator_mostly_parses() {
        let data = intent_fixture(0);
        let seed = stratified_sample(&data.train, &SampleSpec::new(0.01, 0))
            .unwrap()
            .corpus;
        let labels: Vec<String> = data.train.label_space();
        let texts: Vec<&str> = data
            .domain_text
            .iter()
            .map(String::as_str)
            .chain(labels.iter().map(String::as_str))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = GeneratorState::with_tiny_backend(
            GeneratorConfig::default(),
            SeparatorSet::default(),
            TaskKind::IntentDetection,
            labels.clone(),
            texts,
            &mut rng,
        );
        g.pretrain_on_text(&data.domain_text, &mut rng).unwrap();
        g.pretrain_on_seed(&seed, &mut rng).unwrap();
        let out = g.generate_batch(100, &PromptMode::Unconditional, 0, &mut rng).unwrap();
        let parsed = out.iter().filter(|d| d.is_parsed()).count();
        assert!(parsed >= 90, "{parsed}/100");
    }

    #[test]
    fn dialogue_chain_feeds_responses_forward() {
        let config = GeneratorConfig {
            pretrain: PretrainConfig {
                seed_steps: 200,
                learning_rate: 1e-2,
                ..PretrainConfig::default()
            },
            ..GeneratorConfig::default()
        };
        let mut g = state(
            TaskKind::DialogueResponse,
            &[],
            &["hi there how are you fine thanks"],
            config,
        );
        let turns = [
            ("hi", "hi there"),
            ("hi there", "how are you"),
            ("how are you", "fine thanks"),
        ];
        let seed = Corpus::new(
            TaskKind::DialogueResponse,
            SplitTag::SeedTrain,
            turns
                .iter()
                .map(|(a, b)| LabeledExample::new(TaskKind::DialogueResponse, a, b))
                .collect(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        g.pretrain_on_seed(&seed, &mut rng).unwrap();
        let out = g
            .generate_batch(3, &PromptMode::DialogueChain("hi".into()), 0, &mut rng)
            .unwrap();
        for pair in out.windows(2) {
            if let (Some(a), Some(b)) = (pair[0].usable(), pair[1].parsed.as_ref()) {
                assert_eq!(b.label, a.utterance);
            }
        }
        assert_eq!(out[0].parsed.as_ref().unwrap().label, "hi");
    }

    #[test]
    fn unfreeze_schedule() {
        let s = UnfreezeSchedule::default();
        assert_eq!(s.groups_at(0, 3), 1);
        assert_eq!(s.groups_at(3, 3), 2);
        assert_eq!(s.groups_at(6, 3), 3);
        assert_eq!(s.groups_at(100, 3), 3);
        let constant = UnfreezeSchedule { initial: 2, every: 0 };
        assert!((0..20).all(|i| constant.groups_at(i, 3) == 2));
        let mut prev = 0;
        for i in 0..30 {
            let n = s.groups_at(i, 3);
            assert!(n >= prev);
            prev = n;
        }
    }

    #[test]
    fn sync_modes() {
        let mut g = state(
            TaskKind::IntentDetection,
            &["a"],
            &["a b c"],
            GeneratorConfig::default(),
        );
        let probe = g.policy.tokenize("<BOS> a <GO> b c <EOS>");
        g.policy
            .supervised_step(&[probe.clone()], 0.05, OptimizerKind::Adam)
            .unwrap();
        let trained = g.policy.score(&probe[..1], &probe[1..]);
        let original = g.reference.score(&probe[..1], &probe[1..]);
        assert_ne!(trained, original);

        let mut literal = GeneratorState {
            policy: g.policy.clone_box(),
            reference: g.reference.clone_frozen(),
            config: GeneratorConfig {
                sync: SyncConfig {
                    mode: SyncMode::ReferenceToPolicy,
                    every: Some(1),
                },
                ..g.config
            },
            separators: g.separators.clone(),
            task: g.task,
            label_space: g.label_space.clone(),
            next_id: 0,
        };
        literal.sync_reference();
        assert_eq!(literal.policy.score(&probe[..1], &probe[1..]), original);
        assert!(literal.policy.trainable_groups() > 0);

        g.sync_reference();
        assert_eq!(g.reference.score(&probe[..1], &probe[1..]), trained);
        assert!(!SyncConfig::default().due(14));
        assert!(literal.config.sync.due(0));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut g = state(
            TaskKind::IntentDetection,
            &["a"],
            &["a b c"],
            GeneratorConfig::default(),
        );
        let probe = g.policy.tokenize("<BOS> a <GO> b c <EOS>");
        g.policy
            .supervised_step(&[probe.clone()], 0.05, OptimizerKind::Adam)
            .unwrap();
        g.advance_unfreeze(3);
        let dir = tempfile::tempdir().unwrap();
        g.save(dir.path()).unwrap();
        let back = GeneratorState::load(dir.path()).unwrap();
        for (m, n) in [(&g.policy, &back.policy), (&g.reference, &back.reference)] {
            for (x, y) in m
                .score(&probe[..1], &probe[1..])
                .iter()
                .zip(n.score(&probe[..1], &probe[1..]))
            {
                assert!((x - y).abs() <= 1e-6);
            }
        }
        assert_eq!(back.policy.trainable_groups(), 2);
        assert_eq!(back.reference.trainable_groups(), 0);
    }
}
