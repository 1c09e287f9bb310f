//! Cross-validation, confusion metrics and multi-seed sweeps.

mod crossval;
mod metrics;
mod sweep;

pub use crossval::{
    cross_validate, kfold_split, prepare_folds, rep_seed, train_model, CvResult, FoldResult,
};
pub use metrics::{metrics_from_confusion, ConfusionMatrix, Metrics};
pub use sweep::{
    accuracy_histogram, mean_std, sweep, sweep_seeds, voting_sweep, write_histogram_tsv,
    write_sweep_tsv, GaussianFit, SweepPoint, SweepResult, HISTOGRAM_BIN_WIDTH,
};
