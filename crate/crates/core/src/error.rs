use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),

    #[error("corpus vocabulary is empty")]
    EmptyCorpus,

    #[error("at least {needed} ranked entries with positive counts are required, got {got}")]
    TooFewEntries { needed: usize, got: usize },

    #[error("pair {0} has a zero marginal")]
    ZeroMarginal(String),

    #[error("no records to compute thresholds from")]
    NoRecords,

    #[error("number of thresholds must be 1, 2 or 3, got {0}")]
    ThresholdCount(usize),

    #[error("feature index {index} out of range for a row of {width} features")]
    FeatureIndex { index: usize, width: usize },

    #[error("evaluation budget must be at least 1")]
    EmptyBudget,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("k-fold split needs 2 <= k <= {records}, got k = {k}")]
    InvalidFolds { k: usize, records: usize },

    #[error("fold {fold}: {part} set contains only one class")]
    SingleClassFold { fold: usize, part: &'static str },

    #[error("cohort label {0} does not occur in the data")]
    MissingCohort(i64),

    #[error("confusion matrix is empty")]
    EmptyConfusion,

    #[error("parse error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
