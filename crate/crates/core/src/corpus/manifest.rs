use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{filter_rare_classes, load_with, split, write_jsonl, Corpus, CorpusError, SplitTag};
use crate::datamodel::{normalize_text, TaskKind};

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

/// Dataset manifest: task kind, per-split files (relative to the manifest)
/// and slot-name phrase mappings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub task: TaskKind,
    pub train: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<PathBuf>,
    pub test: PathBuf,
    /// Unlabeled in-domain sentences, one per line, used to pretrain the
    /// generator language model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_text: Option<PathBuf>,
    /// Intents with fewer training examples are dropped from every split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_class_size: Option<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub slot_phrases: BTreeMap<String, String>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self, ManifestError> {
        let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| ManifestError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), ManifestError> {
        let text = toml::to_string(self).map_err(|e| ManifestError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        fs::write(path, text).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// All splits of a dataset, loaded and validated.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub task: TaskKind,
    pub train: Corpus,
    pub validation: Corpus,
    pub test: Corpus,
    pub domain_text: Vec<String>,
    pub slot_phrases: BTreeMap<String, String>,
}

fn read_lines(path: &Path) -> Result<Vec<String>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text.lines().map(normalize_text).filter(|l| !l.is_empty()).collect())
}

impl Dataset {
    /// Loads every split named by the manifest at `path`. Without a
    /// validation file the training file is split 80/20 with `split_seed`.
    pub fn load(path: &Path, split_seed: u64) -> Result<Self, CorpusError> {
        let manifest = Manifest::read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let task = manifest.task;
        let phrases = &manifest.slot_phrases;
        let mut train = load_with(&base.join(&manifest.train), task, SplitTag::SeedTrain, phrases)?;
        let mut test = load_with(&base.join(&manifest.test), task, SplitTag::Test, phrases)?;
        let mut validation = match &manifest.validation {
            Some(p) => load_with(&base.join(p), task, SplitTag::Validation, phrases)?,
            None => {
                let (t, v) = split(&train, 0.8, split_seed)?;
                train = t;
                v
            }
        };
        if let Some(min) = manifest.min_class_size {
            if task == TaskKind::IntentDetection {
                train = filter_rare_classes(&train, min);
                let kept: BTreeSet<String> = train.label_space().into_iter().collect();
                validation.examples.retain(|e| kept.contains(&e.label));
                test.examples.retain(|e| kept.contains(&e.label));
            }
        }
        if task == TaskKind::SlotTagging {
            let names: BTreeSet<String> = train
                .slot_names
                .iter()
                .chain(&validation.slot_names)
                .chain(&test.slot_names)
                .cloned()
                .collect();
            let names: Vec<String> = names.into_iter().collect();
            for c in [&mut train, &mut validation, &mut test] {
                c.slot_names = names.clone();
            }
        }
        let domain_text = match &manifest.domain_text {
            Some(p) => read_lines(&base.join(p))?,
            None => Vec::new(),
        };
        Ok(Self {
            task,
            train,
            validation,
            test,
            domain_text,
            slot_phrases: manifest.slot_phrases,
        })
    }

    /// Writes the dataset as JSON-lines files plus `manifest.toml` into `dir`
    /// and returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, CorpusError> {
        fs::create_dir_all(dir).map_err(|source| CorpusError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write_jsonl(&self.train.examples, &dir.join("train.jsonl"))?;
        write_jsonl(&self.validation.examples, &dir.join("validation.jsonl"))?;
        write_jsonl(&self.test.examples, &dir.join("test.jsonl"))?;
        let domain_text = if self.domain_text.is_empty() {
            None
        } else {
            let p = dir.join("domain.txt");
            fs::write(&p, self.domain_text.join("\n") + "\n").map_err(|source| CorpusError::Io {
                path: p.clone(),
                source,
            })?;
            Some(PathBuf::from("domain.txt"))
        };
        let manifest = Manifest {
            task: self.task,
            train: "train.jsonl".into(),
            validation: Some("validation.jsonl".into()),
            test: "test.jsonl".into(),
            domain_text,
            min_class_size: None,
            slot_phrases: self.slot_phrases.clone(),
        };
        let path = dir.join("manifest.toml");
        manifest.write(&path)?;
        Ok(path)
    }
}
