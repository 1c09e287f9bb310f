//! Cohort text classification with evolved boolean programs.
//!
//! The pipeline runs from raw labeled notes to cross-validated ensembles:
//!
//! - [`corpus`]: tokenization, per-record counts, rank distributions and
//!   Zipf-Mandelbrot fits.
//! - [`phrases`]: word pairs and skip-grams, pair mutual information and the
//!   frequency / MI / significant-word cuts.
//! - [`features`]: mean/σ thresholding into boolean features and class-MI
//!   feature ranking.
//! - [`evolearner`]: boolean program trees and the two-loop evolutionary
//!   learner with dynamic feature selection.
//! - [`ensemble`]: majority-vote models, confidence and vote histograms.
//! - [`evaluation`]: round-robin k-fold cross-validation, confusion metrics
//!   and multi-seed sweeps.
//! - [`synthgen`]: synthetic corpora with planted discriminative terms.

pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod evolearner;
pub mod features;
pub mod phrases;
pub mod pipeline;
pub mod synthgen;

pub use error::{Error, Result};
