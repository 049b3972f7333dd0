//! The outer loop: pretrain the generator, then alternate between generating
//! a pool, training a fresh learner on a curriculum of seed and generated
//! data, rewarding every datapoint and updating the policy. A final learner
//! trained on generated data alone is evaluated on the test split.

mod audit;
mod config;

pub use audit::{AccessRecord, Consumer, DataAudit};
pub use config::{DatasetConfig, ExecutionConfig, ExperimentConfig, Mode, ModeSelection, PreparedData};

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusError, SampleReport};
use crate::creativity::{self, CreativityError, CreativityReport};
use crate::curriculum::{compose_batch, plan, CurriculumError, CurriculumPlan, GeneratedCursor, SeedCycler};
use crate::datamodel::{GeneratedDatapoint, LabeledExample, TaskKind};
use crate::generator::{GeneratorError, GeneratorState, PromptMode, PromptStrategy};
use crate::learner::{self, LabelSpace, Learner, LearnerError, WordVectors};
use crate::reward::{per_datapoint_performance, KlController, RewardError, RewardRecord};
use crate::wireformat::serialize;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Creativity(#[from] CreativityError),
    #[error("{consumer:?} must not read test data")]
    TestLeak { consumer: Consumer },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}")]
    Io(String),
    #[error("stopped after {completed} meta-iterations")]
    Interrupted { completed: usize },
}

impl RunError {
    pub fn is_config(&self) -> bool {
        matches!(self, RunError::Config(_))
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Io(format!("{}: {e}", path.display()))
}

/// Summary of one meta-iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRecord {
    pub i_meta: usize,
    pub p_meta: f64,
    pub seed_fraction: f64,
    pub warmup_iterations: usize,
    pub generated: usize,
    pub parsed: usize,
    pub usable: usize,
    /// Generated examples consumed by the learner, repeats included.
    pub used_generated: usize,
    /// Fewer usable datapoints than the curriculum needed; the pool was cycled.
    pub recycled: bool,
    pub learner_iterations: usize,
    pub final_train_loss: Option<f64>,
    pub mean_r_d: f64,
    pub mean_reward: f64,
    pub mean_kl: f64,
    /// KL coefficient used for this meta-iteration's rewards.
    pub beta: f64,
    pub trainable_groups: usize,
    pub ppo_updates: usize,
    pub clip_fraction: f64,
    pub ppo_aborted: bool,
}

/// Reward decomposition of one generated datapoint, one line of `rewards.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardLine {
    pub mode: Mode,
    pub seed: u64,
    pub i_meta: usize,
    pub id: u64,
    pub raw_text: String,
    pub usable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub defect: Option<String>,
    #[serde(flatten)]
    pub reward: RewardRecord,
}

/// One line of `events.jsonl`. Events carry no timings, so identical
/// configurations produce identical event streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    RunStarted {
        mode: Mode,
        seed: u64,
        task: TaskKind,
        seed_examples: usize,
    },
    Pretrained {
        mode: Mode,
        seed: u64,
        text_loss: Option<f64>,
        seed_loss: Option<f64>,
    },
    Resumed {
        mode: Mode,
        seed: u64,
        next_meta: usize,
    },
    MetaIteration {
        mode: Mode,
        seed: u64,
        #[serde(flatten)]
        record: MetaRecord,
    },
    PpoAborted {
        mode: Mode,
        seed: u64,
        i_meta: usize,
    },
    EarlyStopped {
        mode: Mode,
        seed: u64,
        i_meta: usize,
        p_meta: f64,
    },
    Degenerate {
        mode: Mode,
        seed: u64,
        parse_rate: f64,
    },
    RunFinished {
        mode: Mode,
        seed: u64,
        metric: String,
        test_metric: f64,
    },
}

pub trait EventSink {
    fn event(&mut self, event: Event);
    fn reward(&mut self, line: RewardLine);
}

#[derive(Debug, Clone, Default)]
pub struct MemorySink {
    pub events: Vec<Event>,
    pub rewards: Vec<RewardLine>,
}

impl EventSink for MemorySink {
    fn event(&mut self, event: Event) {
        self.events.push(event);
    }

    fn reward(&mut self, line: RewardLine) {
        self.rewards.push(line);
    }
}

/// Generated data behind the final learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalData {
    pub generated: usize,
    pub parsed: usize,
    pub usable: usize,
    pub parse_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub pretrain_seconds: f64,
    pub meta_seconds: Vec<f64>,
    pub final_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub seed: u64,
    pub task: TaskKind,
    pub metric: String,
    pub test_metric: f64,
    pub history: Vec<MetaRecord>,
    pub early_stopped: bool,
    pub final_data: Option<FinalData>,
    pub creativity: Option<CreativityReport>,
    /// Final generation parsed below the configured minimum rate.
    pub degenerate: bool,
    pub audit: DataAudit,
    pub timings: Timings,
}

/// Median test metric per mode and the gaps that matter for comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub medians: BTreeMap<Mode, f64>,
    /// `median(GCN+RL) - median(Baseline)`.
    pub gain_over_baseline: Option<f64>,
    /// `median(GCN+RL) - median(GCN-RL)`.
    pub gain_from_rl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub task: TaskKind,
    pub seed_examples: usize,
    pub sample: SampleReport,
    pub runs: Vec<RunReport>,
    pub comparison: Comparison,
}

impl ExperimentReport {
    pub fn degenerate(&self) -> bool {
        self.runs.iter().any(|r| r.degenerate)
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

pub fn compare(runs: &[RunReport]) -> Comparison {
    let mut by_mode: BTreeMap<Mode, Vec<f64>> = BTreeMap::new();
    for r in runs {
        by_mode.entry(r.mode).or_default().push(r.test_metric);
    }
    let medians: BTreeMap<Mode, f64> = by_mode.iter().filter_map(|(m, v)| Some((*m, median(v)?))).collect();
    let gap = |other| Some(medians.get(&Mode::GcnPlusRl)? - medians.get(&other)?);
    Comparison {
        gain_over_baseline: gap(Mode::Baseline),
        gain_from_rl: gap(Mode::GcnMinusRl),
        medians,
    }
}

const LANE_INIT: u64 = 1;
const LANE_PRETRAIN: u64 = 2;
const LANE_GENERATION: u64 = 3;
const LANE_PPO: u64 = 4;
const LANE_FINAL: u64 = 5;
const LANE_BASELINE: u64 = 6;
const LANE_META: u64 = 1000;

/// Independent deterministic random stream `lane` of a run seed.
pub fn stream(seed: u64, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(lane);
    rng
}

/// Learner word vectors from the dataset's domain text, when enabled.
fn learner_vectors(config: &ExperimentConfig, domain_text: &[String]) -> Option<WordVectors> {
    (config.learner.pretrained_vectors && !domain_text.is_empty())
        .then(|| WordVectors::fit(domain_text, config.learner.embed_dim, 0))
}

/// Responses per dialogue chain.
const CHAIN_LENGTH: usize = 5;

/// Fills a pool of `n` datapoints with the configured prompt strategy.
/// Dialogue pools are chains started from seed context turns.
fn generate_pool(
    generator: &mut GeneratorState,
    n: usize,
    starts: &[String],
    i_meta: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<GeneratedDatapoint>, RunError> {
    if generator.task == TaskKind::DialogueResponse && !starts.is_empty() {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let start = starts.choose(rng).expect("non-empty").clone();
            let k = CHAIN_LENGTH.min(n - out.len());
            out.extend(generator.generate_batch(k, &PromptMode::DialogueChain(start), i_meta, rng)?);
        }
        return Ok(out);
    }
    let labels = generator.label_space.clone();
    match generator.config.prompt {
        PromptStrategy::LabeledRoundRobin if !labels.is_empty() => {
            let mut out = Vec::with_capacity(n);
            for j in 0..n {
                let mode = PromptMode::Labeled(labels[j % labels.len()].clone());
                out.extend(generator.generate_batch(1, &mode, i_meta, rng)?);
            }
            Ok(out)
        }
        _ => Ok(generator.generate_batch(n, &PromptMode::Unconditional, i_meta, rng)?),
    }
}

/// `needed` examples cycling through `usable`; empty if nothing is usable.
fn fill(usable: &[LabeledExample], needed: usize) -> Vec<LabeledExample> {
    usable.iter().cycle().take(needed).cloned().collect()
}

/// Trains on curriculum batches until the plan or the generated pool runs out.
fn train_learner(
    learner: &mut dyn Learner,
    plan: &CurriculumPlan,
    seed: &[LabeledExample],
    generated: &[LabeledExample],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, RunError> {
    let mut seeds = SeedCycler::new(seed.len(), rng);
    let mut cursor = GeneratedCursor::new(generated);
    let mut curve = Vec::with_capacity(plan.learner_iterations);
    for it in 0..plan.learner_iterations {
        let batch = match compose_batch(plan, it, seed, &mut seeds, &mut cursor, rng) {
            Ok(b) => b,
            Err(CurriculumError::NeedMoreGenerated { .. }) => break,
            Err(e) => return Err(e.into()),
        };
        let examples: Vec<LabeledExample> = batch.into_iter().map(|(e, _)| e).collect();
        let loss = learner.train_step(&examples)?;
        if !loss.is_finite() {
            return Err(LearnerError::NonFiniteLoss { step: it }.into());
        }
        curve.push(loss);
    }
    Ok(curve)
}

/// Where a single run keeps its checkpoint, and how far it may go.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub checkpoint_dir: Option<PathBuf>,
    pub resume: bool,
    /// Stop with [`RunError::Interrupted`] after this many meta-iterations
    /// of the current invocation.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LoopState {
    next_meta: usize,
    early_stopped: bool,
    history: Vec<MetaRecord>,
    controller: KlController,
    generation_rng: ChaCha8Rng,
    ppo_rng: ChaCha8Rng,
    audit: DataAudit,
}

const STATE_FILE: &str = "state.json";
const GENERATOR_DIR: &str = "generator";
const REPORT_FILE: &str = "report.json";

fn save_checkpoint(dir: &Path, generator: &GeneratorState, state: &LoopState) -> Result<(), RunError> {
    let gdir = dir.join(GENERATOR_DIR);
    fs::create_dir_all(&gdir).map_err(|e| io_error(&gdir, e))?;
    generator.save(&gdir)?;
    let tmp = dir.join("state.json.tmp");
    let json = serde_json::to_vec(state).map_err(|e| RunError::Checkpoint(e.to_string()))?;
    fs::write(&tmp, json).map_err(|e| io_error(&tmp, e))?;
    fs::rename(&tmp, dir.join(STATE_FILE)).map_err(|e| io_error(dir, e))
}

fn load_checkpoint(dir: &Path) -> Result<Option<(GeneratorState, LoopState)>, RunError> {
    let path = dir.join(STATE_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let bytes = fs::read(&path).map_err(|e| io_error(&path, e))?;
    let state: LoopState = serde_json::from_slice(&bytes).map_err(|e| RunError::Checkpoint(e.to_string()))?;
    let generator = GeneratorState::load(&dir.join(GENERATOR_DIR))?;
    Ok(Some((generator, state)))
}

/// Runs one mode with one seed.
pub fn run(
    config: &ExperimentConfig,
    data: &PreparedData,
    mode: Mode,
    seed: u64,
    options: &RunOptions,
    sink: &mut dyn EventSink,
) -> Result<RunReport, RunError> {
    config.validate()?;
    let started = Instant::now();
    sink.event(Event::RunStarted {
        mode,
        seed,
        task: data.task,
        seed_examples: data.seed.len(),
    });
    let report = match mode {
        Mode::Baseline => run_baseline(config, data, seed)?,
        _ => run_gcn(config, data, mode, seed, options, sink, started)?,
    };
    if report.degenerate {
        sink.event(Event::Degenerate {
            mode,
            seed,
            parse_rate: report.final_data.map_or(0.0, |f| f.parse_rate),
        });
    }
    sink.event(Event::RunFinished {
        mode,
        seed,
        metric: report.metric.clone(),
        test_metric: report.test_metric,
    });
    Ok(report)
}

fn run_baseline(config: &ExperimentConfig, data: &PreparedData, seed: u64) -> Result<RunReport, RunError> {
    let started = Instant::now();
    let meta = &config.meta;
    let mut audit = DataAudit::default();
    let seed_corpus = audit.grant(Consumer::BaselineLearner, &data.seed)?;
    let validation = audit.grant(Consumer::BaselineLearner, &data.validation)?;
    let space = LabelSpace::for_corpora(data.task, &[seed_corpus, validation]);
    let vectors = learner_vectors(config, &data.domain_text);
    let mut rng = stream(seed, LANE_BASELINE);
    let mut learner = learner::spawn_with(data.task, &space, rng.next_u64(), &config.learner, vectors.as_ref())?;
    let all_seed = plan(
        0,
        meta.warmup_meta_iterations,
        meta.learner_iterations_per_meta,
        meta.generator_batch_size,
    )?;
    train_learner(learner.as_mut(), &all_seed, &seed_corpus.examples, &[], &mut rng)?;
    let test = audit.grant(Consumer::FinalEvaluation, &data.test)?;
    let test_metric = learner.evaluate(test)?.metric;
    let total = started.elapsed().as_secs_f64();
    Ok(RunReport {
        mode: Mode::Baseline,
        seed,
        task: data.task,
        metric: data.task.metric_name().to_string(),
        test_metric,
        history: Vec::new(),
        early_stopped: false,
        final_data: None,
        creativity: None,
        degenerate: false,
        audit,
        timings: Timings {
            final_seconds: total,
            total_seconds: total,
            ..Timings::default()
        },
    })
}

fn run_gcn(
    config: &ExperimentConfig,
    data: &PreparedData,
    mode: Mode,
    seed: u64,
    options: &RunOptions,
    sink: &mut dyn EventSink,
    started: Instant,
) -> Result<RunReport, RunError> {
    let meta = &config.meta;
    let task = data.task;
    let mut timings = Timings::default();
    let space = LabelSpace::for_corpora(task, &[&data.seed, &data.validation]);
    let vectors = learner_vectors(config, &data.domain_text);
    let starts: Vec<String> = data.seed.examples.iter().map(|e| e.label.clone()).collect();

    let resumed = match (&options.checkpoint_dir, options.resume) {
        (Some(dir), true) => load_checkpoint(dir)?,
        _ => None,
    };
    let (mut generator, mut state) = match resumed {
        Some((generator, state)) => {
            sink.event(Event::Resumed {
                mode,
                seed,
                next_meta: state.next_meta,
            });
            (generator, state)
        }
        None => {
            let t0 = Instant::now();
            let mut audit = DataAudit::default();
            let seed_corpus = audit.grant(Consumer::GeneratorPretraining, &data.seed)?;
            let generator_labels = match task {
                TaskKind::DialogueResponse => Vec::new(),
                _ => space.labels().to_vec(),
            };
            let serialized: Vec<String> = seed_corpus
                .examples
                .iter()
                .filter_map(|e| serialize(e, &config.separators).ok())
                .collect();
            let texts = data
                .domain_text
                .iter()
                .chain(&serialized)
                .chain(&generator_labels)
                .map(String::as_str);
            let mut generator = GeneratorState::with_tiny_backend(
                config.generator,
                config.separators.clone(),
                task,
                generator_labels.clone(),
                texts,
                &mut stream(seed, LANE_INIT),
            );
            let mut rng = stream(seed, LANE_PRETRAIN);
            let text_curve = generator.pretrain_on_text(&data.domain_text, &mut rng)?;
            let seed_curve = generator.pretrain_on_seed(seed_corpus, &mut rng)?;
            sink.event(Event::Pretrained {
                mode,
                seed,
                text_loss: text_curve.last().copied(),
                seed_loss: seed_curve.last().copied(),
            });
            timings.pretrain_seconds = t0.elapsed().as_secs_f64();
            let state = LoopState {
                next_meta: 0,
                early_stopped: false,
                history: Vec::new(),
                controller: config.kl,
                generation_rng: stream(seed, LANE_GENERATION),
                ppo_rng: stream(seed, LANE_PPO),
                audit,
            };
            (generator, state)
        }
    };

    let pool_size = meta.learner_iterations_per_meta * meta.generator_batch_size;
    let curriculum = |i_meta: usize| {
        // Without seed data there is nothing to warm up on.
        let i = if data.seed.is_empty() {
            meta.warmup_meta_iterations
        } else {
            i_meta
        };
        plan(
            i,
            meta.warmup_meta_iterations,
            meta.learner_iterations_per_meta,
            meta.generator_batch_size,
        )
    };
    let mut completed = 0;
    while !state.early_stopped && state.next_meta < meta.meta_iterations {
        let t0 = Instant::now();
        let i_meta = state.next_meta;
        let plan = curriculum(i_meta)?;
        generator.advance_unfreeze(i_meta);
        let mut pool = generate_pool(&mut generator, pool_size, &starts, i_meta, &mut state.generation_rng)?;
        let usable: Vec<LabeledExample> = pool.iter().filter_map(|d| d.usable().cloned()).collect();
        let needed = plan.total_generated();
        let generated = fill(&usable, needed);

        let mut rng = stream(seed, LANE_META + i_meta as u64);
        let mut learner = learner::spawn_with(task, &space, rng.next_u64(), &config.learner, vectors.as_ref())?;
        let seed_corpus = state.audit.grant(Consumer::MetaLearner { i_meta }, &data.seed)?;
        let curve = train_learner(learner.as_mut(), &plan, &seed_corpus.examples, &generated, &mut rng)?;
        let validation = state
            .audit
            .grant(Consumer::MetaValidation { i_meta }, &data.validation)?;
        let p_meta = learner.evaluate(validation)?.metric;

        let beta = state.controller.beta;
        for d in &mut pool {
            let p_d = per_datapoint_performance(d, learner.as_ref());
            let record = RewardRecord::compute(p_meta, p_d, meta.alpha, d, &state.controller)?;
            d.reward = Some(record);
            sink.reward(RewardLine {
                mode,
                seed,
                i_meta,
                id: d.id,
                raw_text: d.raw_text.clone(),
                usable: d.usable().is_some(),
                defect: d.defect.as_ref().map(ToString::to_string),
                reward: record,
            });
        }
        let n = pool.len().max(1) as f64;
        let mean_r_d = pool.iter().filter_map(|d| d.reward).map(|r| r.r_d).sum::<f64>() / n;
        let mean_reward = pool
            .iter()
            .filter_map(|d| d.reward)
            .map(|r| r.final_reward)
            .sum::<f64>()
            / n;
        let mut mean_kl = pool.iter().map(GeneratedDatapoint::log_ratio_sum).sum::<f64>() / n;
        let (mut ppo_updates, mut clip_fraction, mut ppo_aborted) = (0, 0.0, false);
        if mode == Mode::GcnPlusRl {
            let stats = generator.ppo_update(&pool, &state.controller, &mut state.ppo_rng)?;
            if stats.aborted {
                sink.event(Event::PpoAborted { mode, seed, i_meta });
            }
            (ppo_updates, clip_fraction, ppo_aborted, mean_kl) =
                (stats.updates, stats.clip_fraction, stats.aborted, stats.mean_kl);
            state.controller = state.controller.update_beta(stats.mean_kl, pool.len());
            if config.generator.sync.due(i_meta) {
                generator.sync_reference();
            }
        }
        let record = MetaRecord {
            i_meta,
            p_meta,
            seed_fraction: plan.seed_fraction(),
            warmup_iterations: plan.i_w,
            generated: pool.len(),
            parsed: pool.iter().filter(|d| d.is_parsed()).count(),
            usable: usable.len(),
            used_generated: generated.len().min(needed),
            recycled: usable.len() < needed,
            learner_iterations: curve.len(),
            final_train_loss: curve.last().copied(),
            mean_r_d,
            mean_reward,
            mean_kl,
            beta,
            trainable_groups: generator.policy.trainable_groups(),
            ppo_updates,
            clip_fraction,
            ppo_aborted,
        };
        sink.event(Event::MetaIteration {
            mode,
            seed,
            record: record.clone(),
        });
        state.history.push(record);
        state.next_meta += 1;
        if meta.reached_threshold(p_meta) {
            state.early_stopped = true;
            sink.event(Event::EarlyStopped {
                mode,
                seed,
                i_meta,
                p_meta,
            });
        }
        if let Some(dir) = &options.checkpoint_dir {
            save_checkpoint(dir, &generator, &state)?;
        }
        timings.meta_seconds.push(t0.elapsed().as_secs_f64());
        completed += 1;
        let more = !state.early_stopped && state.next_meta < meta.meta_iterations;
        if more && options.stop_after == Some(completed) {
            return Err(RunError::Interrupted { completed });
        }
    }

    let t0 = Instant::now();
    let mut rng = stream(seed, LANE_FINAL);
    let pool = generate_pool(&mut generator, pool_size, &starts, meta.meta_iterations, &mut rng)?;
    let usable: Vec<LabeledExample> = pool.iter().filter_map(|d| d.usable().cloned()).collect();
    let parsed = pool.iter().filter(|d| d.is_parsed()).count();
    let final_data = FinalData {
        generated: pool.len(),
        parsed,
        usable: usable.len(),
        parse_rate: parsed as f64 / pool.len().max(1) as f64,
    };
    let degenerate = final_data.parse_rate < config.execution.min_parse_rate || usable.is_empty();
    let generated_only = plan(
        meta.warmup_meta_iterations,
        meta.warmup_meta_iterations,
        meta.learner_iterations_per_meta,
        meta.generator_batch_size,
    )?;
    let mut learner = learner::spawn_with(task, &space, rng.next_u64(), &config.learner, vectors.as_ref())?;
    let generated = fill(&usable, generated_only.total_generated());
    train_learner(learner.as_mut(), &generated_only, &[], &generated, &mut rng)?;
    let mut audit = state.audit;
    let test = audit.grant(Consumer::FinalEvaluation, &data.test)?;
    let test_metric = learner.evaluate(test)?.metric;
    let creativity = if usable.is_empty() {
        None
    } else {
        let utterances: Vec<&str> = usable.iter().map(|e| e.utterance.as_str()).collect();
        let train = audit.grant(Consumer::Creativity, &data.full_train)?;
        let test = audit.grant(Consumer::Creativity, &data.test)?;
        Some(creativity::report(
            &utterances,
            &data.seed.utterances(),
            &train.utterances(),
            &test.utterances(),
        )?)
    };
    timings.final_seconds = t0.elapsed().as_secs_f64();
    timings.total_seconds = started.elapsed().as_secs_f64();
    Ok(RunReport {
        mode,
        seed,
        task,
        metric: task.metric_name().to_string(),
        test_metric,
        history: state.history,
        early_stopped: state.early_stopped,
        final_data: Some(final_data),
        creativity,
        degenerate,
        audit,
        timings,
    })
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T], append: bool) -> Result<(), RunError> {
    let file = fs::OpenOptions::new()
        .create(true)
        .append(append)
        .write(true)
        .truncate(!append)
        .open(path)
        .map_err(|e| io_error(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| io_error(path, e))?;
        out.write_all(b"\n").map_err(|e| io_error(path, e))?;
    }
    out.flush().map_err(|e| io_error(path, e))
}

/// Run-directory layout.
pub mod layout {
    pub const CONFIG: &str = "config.toml";
    pub const EVENTS: &str = "events.jsonl";
    pub const REWARDS: &str = "rewards.jsonl";
    pub const REPORT: &str = "report.json";
    pub const CHECKPOINTS: &str = "checkpoints";
    pub const PLOTS: &str = "plots";
}

fn run_dir_name(mode: Mode, seed: u64) -> String {
    format!("{mode}-seed{seed}")
}

/// Loads the dataset named by `config` (relative paths resolve against
/// `base`) and runs every configured mode and seed into `out`.
pub fn run_experiment(
    config: &ExperimentConfig,
    base: &Path,
    out: &Path,
    resume: bool,
) -> Result<ExperimentReport, RunError> {
    config.validate()?;
    let data = PreparedData::load(&config.dataset, base)?;
    run_prepared(config, &data, out, resume)
}

/// Runs every configured mode and seed on prepared data, writing
/// `config.toml`, `events.jsonl`, `rewards.jsonl`, `checkpoints/` and
/// `report.json` under `out`. Runs are distributed over
/// `execution.workers` threads; their events are written in job order.
pub fn run_prepared(
    config: &ExperimentConfig,
    data: &PreparedData,
    out: &Path,
    resume: bool,
) -> Result<ExperimentReport, RunError> {
    config.validate()?;
    let checkpoints = out.join(layout::CHECKPOINTS);
    fs::create_dir_all(&checkpoints).map_err(|e| io_error(&checkpoints, e))?;
    let config_path = out.join(layout::CONFIG);
    fs::write(&config_path, config.to_toml()).map_err(|e| io_error(&config_path, e))?;

    let jobs: Vec<(Mode, u64)> = config
        .mode
        .modes()
        .into_iter()
        .flat_map(|m| config.meta.seeds.iter().map(move |&s| (m, s)))
        .collect();
    type Outcome = (MemorySink, Result<RunReport, RunError>);
    let results: Mutex<Vec<Option<Outcome>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let work = || loop {
        let j = next.fetch_add(1, Ordering::SeqCst);
        let Some(&(mode, seed)) = jobs.get(j) else { break };
        let dir = checkpoints.join(run_dir_name(mode, seed));
        let mut sink = MemorySink::default();
        let outcome = run_job(config, data, mode, seed, &dir, resume, &mut sink);
        results.lock().expect("no poisoned workers")[j] = Some((sink, outcome));
    };
    let workers = config.execution.workers.min(jobs.len()).max(1);
    if workers == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(work);
            }
        });
    }

    let mut events = Vec::new();
    let mut rewards = Vec::new();
    let mut runs = Vec::new();
    let mut first_error = None;
    for (sink, outcome) in results.into_inner().expect("no poisoned workers").into_iter().flatten() {
        events.extend(sink.events);
        rewards.extend(sink.rewards);
        match outcome {
            Ok(r) => runs.push(r),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    write_jsonl(&out.join(layout::EVENTS), &events, resume)?;
    write_jsonl(&out.join(layout::REWARDS), &rewards, resume)?;
    if let Some(e) = first_error {
        return Err(e);
    }
    let report = ExperimentReport {
        config: config.clone(),
        task: data.task,
        seed_examples: data.seed.len(),
        sample: data.sample.clone(),
        comparison: compare(&runs),
        runs,
    };
    let path = out.join(layout::REPORT);
    let json = serde_json::to_vec_pretty(&report).map_err(|e| io_error(&path, e))?;
    fs::write(&path, json).map_err(|e| io_error(&path, e))?;
    Ok(report)
}

fn run_job(
    config: &ExperimentConfig,
    data: &PreparedData,
    mode: Mode,
    seed: u64,
    dir: &Path,
    resume: bool,
    sink: &mut MemorySink,
) -> Result<RunReport, RunError> {
    let finished = dir.join(REPORT_FILE);
    if resume && finished.exists() {
        let bytes = fs::read(&finished).map_err(|e| io_error(&finished, e))?;
        return serde_json::from_slice(&bytes).map_err(|e| RunError::Checkpoint(e.to_string()));
    }
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let options = RunOptions {
        checkpoint_dir: config.execution.checkpoint.then(|| dir.to_path_buf()),
        resume,
        stop_after: None,
    };
    let report = run(config, data, mode, seed, &options, sink)?;
    let json = serde_json::to_vec(&report).map_err(|e| io_error(&finished, e))?;
    fs::write(&finished, json).map_err(|e| io_error(&finished, e))?;
    Ok(report)
}

/// Reads a report written by [`run_prepared`].
pub fn read_report(path: &Path) -> Result<ExperimentReport, RunError> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| io_error(path, e))
}

/// Trains a fresh learner on `train` alone for the configured learner
/// iterations and returns its metric on `test`. `domain_text` feeds the
/// learner's word vectors when they are enabled.
pub fn train_and_evaluate(
    config: &ExperimentConfig,
    train: &Corpus,
    test: &Corpus,
    domain_text: &[String],
    seed: u64,
) -> Result<f64, RunError> {
    config.validate()?;
    if train.task != test.task {
        return Err(RunError::Config(format!(
            "training data is {} but test data is {}",
            train.task.as_str(),
            test.task.as_str()
        )));
    }
    if train.is_empty() {
        return Err(RunError::Config("training data is empty".into()));
    }
    let meta = &config.meta;
    let space = LabelSpace::for_corpora(train.task, &[train]);
    let vectors = learner_vectors(config, domain_text);
    let mut rng = stream(seed, LANE_FINAL);
    let mut learner = learner::spawn_with(train.task, &space, rng.next_u64(), &config.learner, vectors.as_ref())?;
    let generated_only = plan(
        meta.warmup_meta_iterations,
        meta.warmup_meta_iterations,
        meta.learner_iterations_per_meta,
        meta.generator_batch_size,
    )?;
    let pool = fill(&train.examples, generated_only.total_generated());
    train_learner(learner.as_mut(), &generated_only, &[], &pool, &mut rng)?;
    Ok(learner.evaluate(test)?.metric)
}
