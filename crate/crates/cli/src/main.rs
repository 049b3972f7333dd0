//! `gcn` command-line runner.

mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gcn::corpus::{
    dialogue_fixture, intent_fixture, load, slot_fixture, stratified_sample, write_jsonl, Corpus, Dataset, SampleSpec,
    SplitTag,
};
use gcn::creativity;
use gcn::datamodel::TaskKind;
use gcn::generator::{GeneratorState, PromptMode};
use gcn::metaloop::{
    run_experiment, stream, train_and_evaluate, ExperimentConfig, ExperimentReport, Mode, ModeSelection, RunError,
};

/// Exit status classes.
#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
    Degenerate(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
            Failure::Degenerate(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Runtime(m) | Failure::Degenerate(m) => m,
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn config_error(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Task {
    IntentDetection,
    SlotTagging,
    DialogueResponse,
}

impl From<Task> for TaskKind {
    fn from(t: Task) -> Self {
        match t {
            Task::IntentDetection => TaskKind::IntentDetection,
            Task::SlotTagging => TaskKind::SlotTagging,
            Task::DialogueResponse => TaskKind::DialogueResponse,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    GcnPlusRl,
    GcnMinusRl,
    Baseline,
    Compare,
}

impl From<ModeArg> for ModeSelection {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::GcnPlusRl => ModeSelection::GcnPlusRl,
            ModeArg::GcnMinusRl => ModeSelection::GcnMinusRl,
            ModeArg::Baseline => ModeSelection::Baseline,
            ModeArg::Compare => ModeSelection::Compare,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "gcn",
    version,
    about = "Train RL data generators for conversational NLU learners"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a built-in synthetic dataset with its manifest.
    Fixture(FixtureArgs),
    /// Draw a class-stratified limited-resource sample of a dataset.
    Sample(SampleArgs),
    /// Run an experiment from a config file into a run directory.
    Train(TrainArgs),
    /// Sample datapoints from a saved generator.
    Generate(GenerateArgs),
    /// Train a fresh learner on a corpus and evaluate it on another.
    Evaluate(EvaluateArgs),
    /// Novelty and diversity statistics of a generated corpus.
    Creativity(CreativityArgs),
    /// Render a finished run directory as JSON, CSV or SVG plots.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct FixtureArgs {
    #[arg(long, value_enum)]
    task: Task,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Dataset manifest (TOML).
    #[arg(long, conflicts_with = "fixture", required_unless_present = "fixture")]
    manifest: Option<PathBuf>,
    /// Built-in synthetic dataset instead of a manifest.
    #[arg(long, value_enum)]
    fixture: Option<Task>,
    /// Percentage of each class to keep, in (0, 100].
    #[arg(long)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed of the train/validation split for manifests without validation data.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Run directory; defaults to `runs/<config name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Comma-separated run seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    workers: Option<usize>,
    /// Continue from the checkpoints in the run directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Run checkpoint directory or the generator directory inside it.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 10)]
    count: usize,
    /// Prompt with this label instead of the bare start separator.
    #[arg(long)]
    label: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Usable datapoints as a corpus file; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long, value_enum)]
    task: Task,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Learner and iteration settings; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Unlabeled in-domain sentences, one per line, for the learner's word vectors.
    #[arg(long)]
    domain_text: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct CreativityArgs {
    #[arg(long, value_enum)]
    task: Task,
    #[arg(long)]
    generated: PathBuf,
    #[arg(long)]
    seed: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Plots,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

fn fixture_dataset(task: TaskKind, seed: u64) -> Dataset {
    match task {
        TaskKind::IntentDetection => intent_fixture(seed),
        TaskKind::SlotTagging => slot_fixture(seed),
        TaskKind::DialogueResponse => dialogue_fixture(seed),
    }
    .into_dataset()
}

fn cmd_fixture(args: FixtureArgs) -> Result<(), Failure> {
    let path = fixture_dataset(args.task.into(), args.seed)
        .write(&args.out)
        .map_err(runtime)?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_sample(args: SampleArgs) -> Result<(), Failure> {
    let dataset = match (&args.manifest, args.fixture) {
        (Some(path), _) => Dataset::load(path, args.split_seed).map_err(config_error)?,
        (None, Some(task)) => fixture_dataset(task.into(), 0),
        (None, None) => unreachable!("clap requires one source"),
    };
    let sampled =
        stratified_sample(&dataset.train, &SampleSpec::new(args.fraction, args.seed)).map_err(config_error)?;
    let drawn = sampled.corpus.len();
    let subset = Dataset {
        train: sampled.corpus,
        ..dataset
    };
    let manifest = subset.write(&args.out).map_err(runtime)?;
    let provenance = args.out.join("provenance.json");
    let json = serde_json::to_string_pretty(&sampled.report).map_err(runtime)?;
    fs::write(&provenance, json + "\n").map_err(runtime)?;
    println!("{} ({drawn} training examples)", manifest.display());
    Ok(())
}

/// Resolves a relative manifest path against the config file so the config
/// echo in the run directory is self-contained.
fn absolute_manifest(config: &mut ExperimentConfig, config_path: &Path) -> Result<(), Failure> {
    if let Some(manifest) = &config.dataset.manifest {
        let base = config_path.parent().unwrap_or(Path::new("."));
        let joined = base.join(manifest);
        let resolved = joined
            .canonicalize()
            .map_err(|e| Failure::Config(format!("dataset.manifest {}: {e}", joined.display())))?;
        config.dataset.manifest = Some(resolved);
    }
    Ok(())
}

fn comparison_table(report: &ExperimentReport) -> String {
    let mut out = format!("{:<10} {:>8}  {}\n", "mode", "median", "per seed");
    for mode in Mode::ALL {
        let values: Vec<String> = report
            .runs
            .iter()
            .filter(|r| r.mode == mode)
            .map(|r| format!("{:.3}", r.test_metric))
            .collect();
        if let Some(m) = report.comparison.medians.get(&mode) {
            out += &format!("{:<10} {m:>8.3}  {}\n", mode.label(), values.join(" "));
        }
    }
    let m = &report.comparison.medians;
    if let (Some(plus), Some(minus), Some(base)) = (
        m.get(&Mode::GcnPlusRl),
        m.get(&Mode::GcnMinusRl),
        m.get(&Mode::Baseline),
    ) {
        let holds = plus >= minus && minus >= base;
        out += &format!(
            "ordering GCN+RL >= GCN-RL >= Baseline: {}\n",
            if holds { "holds" } else { "violated" }
        );
    }
    out
}

fn cmd_train(args: TrainArgs) -> Result<(), Failure> {
    let mut config = ExperimentConfig::read(&args.config).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(mode) = args.mode {
        config.mode = mode.into();
    }
    if let Some(seeds) = args.seeds {
        config.meta.seeds = seeds;
    }
    if let Some(workers) = args.workers {
        config.execution.workers = workers;
    }
    config.validate()?;
    absolute_manifest(&mut config, &args.config)?;
    let out = args.out.unwrap_or_else(|| {
        let stem = args
            .config
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        Path::new("runs").join(stem)
    });
    let report = run_experiment(&config, Path::new("."), &out, args.resume)?;
    print!("{}", comparison_table(&report));
    println!("run directory: {}", out.display());
    let degenerate: Vec<String> = report
        .runs
        .iter()
        .filter(|r| r.degenerate)
        .map(|r| format!("{}-seed{}", r.mode, r.seed))
        .collect();
    if degenerate.is_empty() {
        Ok(())
    } else {
        Err(Failure::Degenerate(format!(
            "degenerate runs: {}",
            degenerate.join(", ")
        )))
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Failure> {
    let dir = if args.checkpoint.join("generator").is_dir() {
        args.checkpoint.join("generator")
    } else {
        args.checkpoint.clone()
    };
    let mut generator = GeneratorState::load(&dir).map_err(config_error)?;
    let mode = match args.label {
        Some(label) => PromptMode::Labeled(label),
        None => PromptMode::Unconditional,
    };
    let mut rng = stream(args.seed, 0);
    let batch = generator
        .generate_batch(args.count, &mode, 0, &mut rng)
        .map_err(runtime)?;
    let usable: Vec<_> = batch.iter().filter_map(|d| d.usable().cloned()).collect();
    eprintln!(
        "generated {}, parsed {}, usable {}",
        batch.len(),
        batch.iter().filter(|d| d.is_parsed()).count(),
        usable.len()
    );
    match args.out {
        Some(path) => write_jsonl(&usable, &path).map_err(runtime)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            for e in &usable {
                writeln!(stdout, "{}", gcn::corpus::to_record(e)).map_err(runtime)?;
            }
        }
    }
    Ok(())
}

fn read_corpus(path: &Path, task: TaskKind, split: SplitTag) -> Result<Corpus, Failure> {
    load(path, task, split).map_err(config_error)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    let task: TaskKind = args.task.into();
    let config = match &args.config {
        Some(p) => ExperimentConfig::read(p).map_err(|e| Failure::Config(e.to_string()))?,
        None => ExperimentConfig::for_task(task),
    };
    let train = read_corpus(&args.train, task, SplitTag::SeedTrain)?;
    let test = read_corpus(&args.test, task, SplitTag::Test)?;
    let domain_text = match &args.domain_text {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(str::to_string)
            .collect(),
        None => Vec::new(),
    };
    let metric = train_and_evaluate(&config, &train, &test, &domain_text, args.seed)?;
    let out = serde_json::json!({
        "task": task,
        "metric": task.metric_name(),
        "value": metric,
        "train_examples": train.len(),
        "test_examples": test.len(),
    });
    println!("{out}");
    Ok(())
}

fn cmd_creativity(args: CreativityArgs) -> Result<(), Failure> {
    let task: TaskKind = args.task.into();
    let generated = read_corpus(&args.generated, task, SplitTag::SeedTrain)?;
    let seed = read_corpus(&args.seed, task, SplitTag::SeedTrain)?;
    let train = read_corpus(&args.train, task, SplitTag::SeedTrain)?;
    let test = read_corpus(&args.test, task, SplitTag::Test)?;
    let report = creativity::report(
        &generated.utterances(),
        &seed.utterances(),
        &train.utterances(),
        &test.utterances(),
    )
    .map_err(config_error)?;
    println!("{}", serde_json::to_string(&report).map_err(runtime)?);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Fixture(a) => cmd_fixture(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Train(a) => cmd_train(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Creativity(a) => cmd_creativity(a),
        Command::Report(a) => report::render(&a.run, a.format),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
