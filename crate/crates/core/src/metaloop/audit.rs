//! Data-access log. Every corpus handed to a component passes through
//! [`DataAudit::grant`], which refuses test data to anything but the final
//! evaluation and the creativity statistics.

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::corpus::{Corpus, SplitTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "consumer", rename_all = "snake_case")]
pub enum Consumer {
    GeneratorPretraining,
    MetaLearner { i_meta: usize },
    MetaValidation { i_meta: usize },
    BaselineLearner,
    FinalLearner,
    FinalEvaluation,
    Creativity,
}

impl Consumer {
    pub fn may_read(self, split: SplitTag) -> bool {
        split != SplitTag::Test || matches!(self, Consumer::FinalEvaluation | Consumer::Creativity)
    }

    /// Generator and per-meta-iteration learners.
    pub fn is_training_time(self) -> bool {
        matches!(
            self,
            Consumer::GeneratorPretraining | Consumer::MetaLearner { .. } | Consumer::MetaValidation { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRecord {
    #[serde(flatten)]
    pub consumer: Consumer,
    pub split: SplitTag,
    pub examples: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DataAudit {
    pub records: Vec<AccessRecord>,
}

impl DataAudit {
    pub fn grant<'c>(&mut self, consumer: Consumer, corpus: &'c Corpus) -> Result<&'c Corpus, RunError> {
        if !consumer.may_read(corpus.split) {
            return Err(RunError::TestLeak { consumer });
        }
        self.records.push(AccessRecord {
            consumer,
            split: corpus.split,
            examples: corpus.len(),
        });
        Ok(corpus)
    }

    /// Records of training-time consumers that saw test data; always empty
    /// for logs produced through [`DataAudit::grant`].
    pub fn tainted(&self) -> Vec<AccessRecord> {
        self.records
            .iter()
            .filter(|r| r.split == SplitTag::Test && r.consumer.is_training_time())
            .copied()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::TaskKind;

    #[test]
    fn test_data_is_refused_to_training_consumers() {
        let test = Corpus::new(TaskKind::IntentDetection, SplitTag::Test, Vec::new());
        let mut audit = DataAudit::default();
        for consumer in [
            Consumer::GeneratorPretraining,
            Consumer::MetaLearner { i_meta: 0 },
            Consumer::MetaValidation { i_meta: 2 },
            Consumer::BaselineLearner,
            Consumer::FinalLearner,
        ] {
            assert!(matches!(audit.grant(consumer, &test), Err(RunError::TestLeak { .. })));
        }
        assert!(audit.grant(Consumer::FinalEvaluation, &test).is_ok());
        assert!(audit.tainted().is_empty());
        assert_eq!(audit.records.len(), 1);
    }
}
