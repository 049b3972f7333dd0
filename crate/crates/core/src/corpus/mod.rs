//! Dataset ingestion, train/validation splitting and class-stratified
//! limited-resource subsampling.

mod fixture;
mod manifest;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{validate_example, LabeledExample, TaskKind, Violation};
use crate::wireformat::{iob_to_spans, phrase_form, slot_label, spans_to_iob, SlotSpan};

pub use fixture::{dialogue_fixture, intent_fixture, slot_fixture, SyntheticDataset};
pub use manifest::{Dataset, Manifest, ManifestError};

/// Which role a corpus plays. Test corpora are tainted: only the final
/// evaluation may read them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    SeedTrain,
    Validation,
    Test,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitTag::SeedTrain => "seed_train",
            SplitTag::Validation => "validation",
            SplitTag::Test => "test",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: field `{field}`: {message}")]
    Schema {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: slot `{slot}` offsets {start}..{end} do not match value `{value}`")]
    Offset {
        line: usize,
        slot: String,
        value: String,
        start: usize,
        end: usize,
    },
    #[error("line {line}: {violations:?}")]
    Invalid { line: usize, violations: Vec<Violation> },
    #[error("fraction {0} must lie in (0, 100]")]
    Fraction(f64),
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    TrainFraction(f64),
    #[error("min_per_class must be at least 1")]
    MinPerClass,
    #[error("{operation} is not allowed on a {split} corpus")]
    WrongSplit { operation: &'static str, split: SplitTag },
    #[error("{0}")]
    Manifest(#[from] ManifestError),
}

/// A set of labeled examples of one task, tagged with its split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub task: TaskKind,
    pub split: SplitTag,
    pub examples: Vec<LabeledExample>,
    /// Phrase-form slot names (slot tagging only), sorted.
    #[serde(default)]
    pub slot_names: Vec<String>,
}

impl Corpus {
    pub fn new(task: TaskKind, split: SplitTag, examples: Vec<LabeledExample>) -> Self {
        let mut corpus = Self {
            task,
            split,
            examples,
            slot_names: Vec::new(),
        };
        corpus.slot_names = corpus.observed_slot_names();
        corpus
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn with_split(mut self, split: SplitTag) -> Self {
        self.split = split;
        self
    }

    fn observed_slot_names(&self) -> Vec<String> {
        let mut names = BTreeSet::new();
        for e in &self.examples {
            if let Some(tags) = &e.iob_tags {
                for span in crate::learner::metrics::extract_spans(tags) {
                    names.insert(span.label);
                }
            }
        }
        names.into_iter().collect()
    }

    /// Class labels in sorted order: intents, or slot names for tagging.
    pub fn label_space(&self) -> Vec<String> {
        match self.task {
            TaskKind::IntentDetection => {
                let set: BTreeSet<&str> = self.examples.iter().map(|e| e.label.as_str()).collect();
                set.into_iter().map(String::from).collect()
            }
            TaskKind::SlotTagging => self.slot_names.clone(),
            TaskKind::DialogueResponse => Vec::new(),
        }
    }

    /// Stratum key of an example: its intent, its set of slot names, or a
    /// single bucket for dialogue pairs.
    pub fn class_of(&self, example: &LabeledExample) -> String {
        match self.task {
            TaskKind::IntentDetection => example.label.clone(),
            TaskKind::SlotTagging => {
                let names = slot_names_of(example);
                if names.is_empty() {
                    crate::datamodel::EMPTY_SLOT_LABEL.to_string()
                } else {
                    names.into_iter().collect::<Vec<_>>().join("+")
                }
            }
            TaskKind::DialogueResponse => "dialogue".to_string(),
        }
    }

    pub fn class_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.examples {
            *counts.entry(self.class_of(e)).or_insert(0) += 1;
        }
        counts
    }

    /// Utterances in corpus order.
    pub fn utterances(&self) -> Vec<&str> {
        self.examples.iter().map(|e| e.utterance.as_str()).collect()
    }
}

/// Phrase-form slot names present in an example, from its tags when
/// available and its label otherwise.
pub fn slot_names_of(example: &LabeledExample) -> BTreeSet<String> {
    match &example.iob_tags {
        Some(tags) => crate::learner::metrics::extract_spans(tags)
            .into_iter()
            .map(|s| s.label)
            .collect(),
        None => BTreeSet::new(),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IntentRecord {
    text: String,
    intent: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SlotAnnotation {
    slot: String,
    value: String,
    start: usize,
    end: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SlotRecord {
    text: String,
    slots: Vec<SlotAnnotation>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DialogueRecord {
    turns: Vec<String>,
}

fn schema_error(line: usize, err: serde_json::Error) -> CorpusError {
    let message = err.to_string();
    let field = message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "<record>".to_string());
    CorpusError::Schema { line, field, message }
}

fn checked(line: usize, example: LabeledExample) -> Result<LabeledExample, CorpusError> {
    validate_example(&example).map_err(|violations| CorpusError::Invalid { line, violations })?;
    Ok(example)
}

fn slot_example(
    line: usize,
    record: SlotRecord,
    phrases: &BTreeMap<String, String>,
) -> Result<LabeledExample, CorpusError> {
    let chars: Vec<char> = record.text.chars().collect();
    let mut spans = Vec::with_capacity(record.slots.len());
    let mut pairs = Vec::with_capacity(record.slots.len());
    for a in record.slots {
        let offset_error = || CorpusError::Offset {
            line,
            slot: a.slot.clone(),
            value: a.value.clone(),
            start: a.start,
            end: a.end,
        };
        if a.start >= a.end || a.end > chars.len() {
            return Err(offset_error());
        }
        let surface: String = chars[a.start..a.end].iter().collect();
        let value = crate::datamodel::normalize_text(&a.value);
        if crate::datamodel::normalize_text(&surface) != value || value.is_empty() {
            return Err(offset_error());
        }
        let phrase = phrases.get(&a.slot).cloned().unwrap_or_else(|| phrase_form(&a.slot));
        spans.push(SlotSpan {
            slot_name: phrase.clone(),
            value: surface,
            char_start: a.start,
            char_end: a.end,
        });
        pairs.push((phrase, value));
    }
    let tags = spans_to_iob(&record.text, &spans).ok_or_else(|| CorpusError::Schema {
        line,
        field: "slots".into(),
        message: "spans overlap or cut through a token".into(),
    })?;
    let example = LabeledExample::new(TaskKind::SlotTagging, &slot_label(&pairs), &record.text).with_tags(tags);
    checked(line, example)
}

/// Reads a JSON-lines dataset. Slot names are mapped to phrases through
/// `phrases`, falling back to [`phrase_form`].
pub fn load_with(
    path: &Path,
    task: TaskKind,
    split: SplitTag,
    phrases: &BTreeMap<String, String>,
) -> Result<Corpus, CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(io)?;
    let mut examples = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        match task {
            TaskKind::IntentDetection => {
                let r: IntentRecord = serde_json::from_str(&line).map_err(|e| schema_error(line_no, e))?;
                examples.push(checked(line_no, LabeledExample::new(task, &r.intent, &r.text))?);
            }
            TaskKind::SlotTagging => {
                let r: SlotRecord = serde_json::from_str(&line).map_err(|e| schema_error(line_no, e))?;
                examples.push(slot_example(line_no, r, phrases)?);
            }
            TaskKind::DialogueResponse => {
                let r: DialogueRecord = serde_json::from_str(&line).map_err(|e| schema_error(line_no, e))?;
                for pair in r.turns.windows(2) {
                    examples.push(checked(line_no, LabeledExample::new(task, &pair[0], &pair[1]))?);
                }
            }
        }
    }
    let mut corpus = Corpus::new(task, split, examples);
    if task == TaskKind::SlotTagging {
        let mut names: BTreeSet<String> = corpus.slot_names.iter().cloned().collect();
        names.extend(phrases.values().cloned());
        corpus.slot_names = names.into_iter().collect();
    }
    Ok(corpus)
}

/// Reads a JSON-lines dataset with default slot phrase forms.
pub fn load(path: &Path, task: TaskKind, split: SplitTag) -> Result<Corpus, CorpusError> {
    load_with(path, task, split, &BTreeMap::new())
}

/// JSON-lines record for one example, in the dataset schema of its task.
pub fn to_record(example: &LabeledExample) -> serde_json::Value {
    match example.task {
        TaskKind::IntentDetection => {
            serde_json::json!({ "text": example.utterance, "intent": example.label })
        }
        TaskKind::SlotTagging => {
            let spans = example
                .iob_tags
                .as_deref()
                .map(|tags| iob_to_spans(&example.utterance, tags))
                .unwrap_or_default();
            let slots: Vec<SlotAnnotation> = spans
                .into_iter()
                .map(|s| SlotAnnotation {
                    slot: s.slot_name,
                    value: s.value,
                    start: s.char_start,
                    end: s.char_end,
                })
                .collect();
            serde_json::json!({ "text": example.utterance, "slots": slots })
        }
        TaskKind::DialogueResponse => {
            serde_json::json!({ "turns": [example.label, example.utterance] })
        }
    }
}

/// Writes examples as JSON lines.
pub fn write_jsonl(examples: &[LabeledExample], path: &Path) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    for e in examples {
        writeln!(out, "{}", to_record(e)).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Limited-resource sampling request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    /// Percentage of each class to keep, in (0, 100].
    pub fraction: f64,
    pub rng_seed: u64,
    pub min_per_class: usize,
}

impl SampleSpec {
    pub fn new(fraction: f64, rng_seed: u64) -> Self {
        Self {
            fraction,
            rng_seed,
            min_per_class: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDraw {
    pub available: usize,
    pub drawn: usize,
    /// The minimum-per-class rule raised this class above its proportional share.
    pub min_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub fraction: f64,
    pub rng_seed: u64,
    pub per_class: BTreeMap<String, ClassDraw>,
}

impl SampleReport {
    pub fn min_rule_bound(&self) -> bool {
        self.per_class.values().any(|c| c.min_bound)
    }
}

#[derive(Debug, Clone)]
pub struct Sampled {
    pub corpus: Corpus,
    pub report: SampleReport,
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

fn proportional(fraction: f64, n: usize) -> usize {
    round_half_up(fraction * n as f64 / 100.0)
}

fn strata(corpus: &Corpus) -> BTreeMap<String, Vec<usize>> {
    let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, e) in corpus.examples.iter().enumerate() {
        out.entry(corpus.class_of(e)).or_default().push(i);
    }
    out
}

/// Draws a class-stratified subsample without replacement.
///
/// Intents (and the single dialogue bucket) keep
/// `max(min_per_class, round(fraction * n / 100))` examples per class. Slot
/// corpora are stratified by slot-name set after a greedy cover pass that
/// secures `min_per_class` examples for every slot name.
pub fn stratified_sample(corpus: &Corpus, spec: &SampleSpec) -> Result<Sampled, CorpusError> {
    if corpus.split == SplitTag::Test {
        return Err(CorpusError::WrongSplit {
            operation: "subsampling",
            split: corpus.split,
        });
    }
    if !(spec.fraction > 0.0 && spec.fraction <= 100.0) {
        return Err(CorpusError::Fraction(spec.fraction));
    }
    if spec.min_per_class == 0 {
        return Err(CorpusError::MinPerClass);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut strata = strata(corpus);
    for members in strata.values_mut() {
        members.shuffle(&mut rng);
    }
    let mut selected = vec![false; corpus.len()];

    let per_class_floor = if corpus.task == TaskKind::SlotTagging {
        cover_slot_names(corpus, spec, &mut rng, &mut selected);
        0
    } else {
        spec.min_per_class
    };

    let mut per_class = BTreeMap::new();
    for (class, members) in &strata {
        let share = proportional(spec.fraction, members.len());
        let target = share.max(per_class_floor).min(members.len());
        let mut drawn = members.iter().filter(|&&i| selected[i]).count();
        for &i in members {
            if drawn >= target {
                break;
            }
            if !selected[i] {
                selected[i] = true;
                drawn += 1;
            }
        }
        per_class.insert(
            class.clone(),
            ClassDraw {
                available: members.len(),
                drawn,
                min_bound: drawn > share,
            },
        );
    }

    let examples = corpus
        .examples
        .iter()
        .zip(&selected)
        .filter(|(_, &s)| s)
        .map(|(e, _)| e.clone())
        .collect();
    Ok(Sampled {
        corpus: Corpus {
            examples,
            ..corpus.clone()
        },
        report: SampleReport {
            fraction: spec.fraction,
            rng_seed: spec.rng_seed,
            per_class,
        },
    })
}

/// Greedy set cover: repeatedly selects the example covering the most slot
/// names still short of `min_per_class`, ties broken by a seeded order.
fn cover_slot_names(corpus: &Corpus, spec: &SampleSpec, rng: &mut ChaCha8Rng, selected: &mut [bool]) {
    let names: Vec<BTreeSet<String>> = corpus.examples.iter().map(slot_names_of).collect();
    let mut available: BTreeMap<&str, usize> = BTreeMap::new();
    for set in &names {
        for n in set {
            *available.entry(n.as_str()).or_insert(0) += 1;
        }
    }
    let mut need: BTreeMap<&str, usize> = available
        .iter()
        .map(|(&n, &a)| (n, spec.min_per_class.min(a)))
        .collect();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(rng);
    loop {
        let best = order
            .iter()
            .filter(|&&i| !selected[i])
            .map(|&i| {
                let gain = names[i]
                    .iter()
                    .filter(|n| need.get(n.as_str()).is_some_and(|&k| k > 0))
                    .count();
                (gain, i)
            })
            .filter(|&(gain, _)| gain > 0)
            // First maximum in seeded order.
            .fold(None, |best: Option<(usize, usize)>, cand| match best {
                Some(b) if b.0 >= cand.0 => Some(b),
                _ => Some(cand),
            });
        let Some((_, i)) = best else { break };
        selected[i] = true;
        for n in &names[i] {
            if let Some(k) = need.get_mut(n.as_str()) {
                *k = k.saturating_sub(1);
            }
        }
    }
}

/// Class-stratified random partition into `(train, validation)`.
pub fn split(corpus: &Corpus, train_fraction: f64, rng_seed: u64) -> Result<(Corpus, Corpus), CorpusError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CorpusError::TrainFraction(train_fraction));
    }
    if corpus.split != SplitTag::SeedTrain {
        return Err(CorpusError::WrongSplit {
            operation: "train/validation splitting",
            split: corpus.split,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut in_train = vec![false; corpus.len()];
    for (_, mut members) in strata(corpus) {
        members.shuffle(&mut rng);
        let k = round_half_up(train_fraction * members.len() as f64).min(members.len());
        for &i in &members[..k] {
            in_train[i] = true;
        }
    }
    let pick = |keep: bool| -> Vec<LabeledExample> {
        corpus
            .examples
            .iter()
            .zip(&in_train)
            .filter(|(_, &t)| t == keep)
            .map(|(e, _)| e.clone())
            .collect()
    };
    let train = Corpus {
        examples: pick(true),
        ..corpus.clone()
    };
    let validation = Corpus {
        examples: pick(false),
        split: SplitTag::Validation,
        ..corpus.clone()
    };
    Ok((train, validation))
}

/// Drops intent classes with fewer than `min_count` examples.
pub fn filter_rare_classes(corpus: &Corpus, min_count: usize) -> Corpus {
    let counts = corpus.class_counts();
    let examples = corpus
        .examples
        .iter()
        .filter(|e| counts[&corpus.class_of(e)] >= min_count)
        .cloned()
        .collect();
    Corpus {
        examples,
        ..corpus.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intents(classes: usize, per_class: usize) -> Corpus {
        let mut examples = Vec::new();
        for c in 0..classes {
            for k in 0..per_class {
                examples.push(LabeledExample::new(
                    TaskKind::IntentDetection,
                    &format!("intent{c}"),
                    &format!("utterance {c} number {k}"),
                ));
            }
        }
        Corpus::new(TaskKind::IntentDetection, SplitTag::SeedTrain, examples)
    }

    fn write(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn loads_intent_records() {
        let f = write(&[r#"{"text":"What flights leave Phoenix","intent":"flight"}"#]);
        let c = load(f.path(), TaskKind::IntentDetection, SplitTag::SeedTrain).unwrap();
        assert_eq!(c.examples[0].label, "flight");
        assert_eq!(c.examples[0].utterance, "what flights leave phoenix");
    }

    #[test]
    fn empty_file_is_an_empty_corpus() {
        let f = write(&[]);
        let c = load(f.path(), TaskKind::SlotTagging, SplitTag::SeedTrain).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn schema_errors_name_line_and_field() {
        let f = write(&[r#"{"text":"hi","intent":"greet"}"#, r#"{"text":"hi","label":"greet"}"#]);
        let err = load(f.path(), TaskKind::IntentDetection, SplitTag::SeedTrain).unwrap_err();
        match err {
            CorpusError::Schema { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "label");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn slot_records_become_tagged_examples() {
        let f = write(&[
            r#"{"text":"arrive in Boston by 9am","slots":[{"slot":"city","value":"boston","start":10,"end":16},{"slot":"arrival_time","value":"9am","start":20,"end":23}]}"#,
        ]);
        let c = load(f.path(), TaskKind::SlotTagging, SplitTag::SeedTrain).unwrap();
        let e = &c.examples[0];
        assert_eq!(e.label, "city boston arrival time 9am");
        assert_eq!(
            e.iob_tags.as_deref().unwrap(),
            ["O", "O", "B-city", "O", "B-arrival time"]
        );
        assert_eq!(c.slot_names, ["arrival time", "city"]);
        let back = to_record(e);
        assert_eq!(back["slots"][0]["start"], 10);
    }

    #[test]
    fn mismatched_offsets_are_rejected() {
        let f =
            write(&[r#"{"text":"arrive in boston","slots":[{"slot":"city","value":"boston","start":9,"end":15}]}"#]);
        let err = load(f.path(), TaskKind::SlotTagging, SplitTag::SeedTrain).unwrap_err();
        assert!(matches!(err, CorpusError::Offset { line: 1, .. }), "{err}");
    }

    #[test]
    fn dialogue_turns_become_adjacent_pairs() {
        let f = write(&[r#"{"turns":["hi","hello there","how are you"]}"#]);
        let c = load(f.path(), TaskKind::DialogueResponse, SplitTag::SeedTrain).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.examples[1].label, "hello there");
        assert_eq!(c.examples[1].utterance, "how are you");
    }

    #[test]
    fn ten_percent_is_exactly_proportional() {
        let s = stratified_sample(&intents(10, 100), &SampleSpec::new(10.0, 3)).unwrap();
        assert_eq!(s.corpus.len(), 100);
        assert!(s.corpus.class_counts().values().all(|&n| n == 10));
        assert!(!s.report.min_rule_bound());
    }

    #[test]
    fn minimum_rule_binds_for_tiny_fractions() {
        let s = stratified_sample(&intents(10, 100), &SampleSpec::new(0.5, 3)).unwrap();
        assert_eq!(s.corpus.class_counts().len(), 10);
        assert!(s.corpus.len() >= 10);
        // round(0.5) rounds half up, so no class needed the floor here.
        let s = stratified_sample(&intents(10, 100), &SampleSpec::new(0.4, 3)).unwrap();
        assert_eq!(s.corpus.len(), 10);
        assert!(s.report.min_rule_bound());
    }

    #[test]
    fn test_corpora_are_never_sampled() {
        let c = intents(2, 10).with_split(SplitTag::Test);
        assert!(matches!(
            stratified_sample(&c, &SampleSpec::new(10.0, 0)),
            Err(CorpusError::WrongSplit { .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let c = intents(4, 50);
        let a = stratified_sample(&c, &SampleSpec::new(5.0, 11)).unwrap();
        let b = stratified_sample(&c, &SampleSpec::new(5.0, 11)).unwrap();
        let d = stratified_sample(&c, &SampleSpec::new(5.0, 12)).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_ne!(a.corpus, d.corpus);
    }

    #[test]
    fn slot_sampling_covers_every_slot_name() {
        let data = slot_fixture(5);
        let s = stratified_sample(&data.train, &SampleSpec::new(0.5, 1)).unwrap();
        let covered: BTreeSet<String> = s.corpus.examples.iter().flat_map(slot_names_of).collect();
        assert_eq!(covered.into_iter().collect::<Vec<_>>(), data.train.slot_names);
    }

    #[test]
    fn rejects_degenerate_fractions() {
        assert!(split(&intents(2, 10), 1.0, 0).is_err());
        assert!(split(&intents(2, 10), 0.0, 0).is_err());
        assert!(stratified_sample(&intents(2, 10), &SampleSpec::new(0.0, 0)).is_err());
        assert!(stratified_sample(&intents(2, 10), &SampleSpec::new(100.5, 0)).is_err());
    }

    #[test]
    fn eighty_twenty_split() {
        let (train, val) = split(&intents(5, 100), 0.8, 7).unwrap();
        assert_eq!(train.len(), 400);
        assert_eq!(val.len(), 100);
        assert_eq!(val.split, SplitTag::Validation);
        let (train2, _) = split(&intents(5, 100), 0.8, 7).unwrap();
        assert_eq!(train, train2);
    }

    #[test]
    fn rare_classes_are_dropped() {
        let mut c = intents(2, 30);
        c.examples.truncate(45);
        let kept = filter_rare_classes(&c, 20);
        assert_eq!(kept.class_counts().len(), 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn corpus() -> impl Strategy<Value = Corpus> {
            prop::collection::vec(1usize..60, 1..8).prop_map(|sizes| {
                let mut examples = Vec::new();
                for (c, &n) in sizes.iter().enumerate() {
                    for k in 0..n {
                        examples.push(LabeledExample::new(
                            TaskKind::IntentDetection,
                            &format!("c{c}"),
                            &format!("u {c} {k}"),
                        ));
                    }
                }
                Corpus::new(TaskKind::IntentDetection, SplitTag::SeedTrain, examples)
            })
        }

        proptest! {
            #[test]
            fn sampling_preserves_class_support(c in corpus(), fraction in 0.1f64..100.0, seed in 0u64..1000) {
                let s = stratified_sample(&c, &SampleSpec::new(fraction, seed)).unwrap();
                let before: Vec<_> = c.class_counts().into_keys().collect();
                let after: Vec<_> = s.corpus.class_counts().into_keys().collect();
                prop_assert_eq!(before, after);
                if !s.report.min_rule_bound() {
                    let expected = fraction * c.len() as f64 / 100.0;
                    let classes = c.class_counts().len() as f64;
                    prop_assert!((s.corpus.len() as f64 - expected).abs() <= classes);
                }
            }

            #[test]
            fn split_partitions_the_input(c in corpus(), f in 0.05f64..0.95, seed in 0u64..1000) {
                let (train, val) = split(&c, f, seed).unwrap();
                prop_assert_eq!(train.len() + val.len(), c.len());
                let mut merged: Vec<_> = train.examples.iter().chain(&val.examples).cloned().collect();
                let mut original = c.examples.clone();
                merged.sort_by(|a, b| a.utterance.cmp(&b.utterance));
                original.sort_by(|a, b| a.utterance.cmp(&b.utterance));
                prop_assert_eq!(merged, original);
            }
        }
    }
}
