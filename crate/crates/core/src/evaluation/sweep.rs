use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::crossval::{cross_validate, prepare_folds, train_model};
use super::metrics::ConfusionMatrix;
use crate::ensemble::{model_confusion, Model};
use crate::error::{Error, Result};
use crate::evolearner::TrainConfig;
use crate::pipeline::{Dataset, FoldFeatures, PipelineConfig};

/// Width of accuracy histogram bins.
pub const HISTOGRAM_BIN_WIDTH: f64 = 0.02;

/// One configuration of a sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub label: String,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
    pub k: usize,
    pub model_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub label: String,
    /// Pooled cross-validated accuracy per seed, in seed order.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std_dev: f64,
}

impl SweepResult {
    pub fn new(label: impl Into<String>, accuracies: Vec<f64>) -> Self {
        let (mean, std_dev) = mean_std(&accuracies);
        SweepResult {
            label: label.into(),
            accuracies,
            mean,
            std_dev,
        }
    }
}

/// Mean and population standard deviation; `(0, 0)` when empty.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Moment-matched normal curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFit {
    pub mean: f64,
    pub std_dev: f64,
}

impl GaussianFit {
    pub fn from_values(values: &[f64]) -> Self {
        let (mean, std_dev) = mean_std(values);
        GaussianFit { mean, std_dev }
    }

    pub fn density(&self, x: f64) -> f64 {
        if self.std_dev == 0.0 {
            return if x == self.mean { f64::INFINITY } else { 0.0 };
        }
        let z = (x - self.mean) / self.std_dev;
        (-0.5 * z * z).exp() / (self.std_dev * (2.0 * std::f64::consts::PI).sqrt())
    }
}

/// Counts per bin `[j·width, (j+1)·width)` from the lowest to the highest
/// occupied bin, as `(left edge, count)`.
pub fn accuracy_histogram(values: &[f64], width: f64) -> Vec<(f64, usize)> {
    // The epsilon keeps values sitting on an edge, like 0.56 / 0.02, from
    // rounding into the bin below.
    let bin = |v: f64| (v / width + 1e-9).floor() as i64;
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &v in values {
        *counts.entry(bin(v)).or_default() += 1;
    }
    let (Some(&lo), Some(&hi)) = (counts.keys().next(), counts.keys().next_back()) else {
        return Vec::new();
    };
    (lo..=hi)
        .map(|j| (j as f64 * width, counts.get(&j).copied().unwrap_or(0)))
        .collect()
}

/// `bin_left  count  gaussian` where `gaussian` is the fitted curve's
/// expected count for the bin.
pub fn write_histogram_tsv<W: Write>(mut out: W, values: &[f64], width: f64) -> Result<()> {
    let fit = GaussianFit::from_values(values);
    writeln!(out, "bin_left\tcount\tgaussian")?;
    for (left, count) in accuracy_histogram(values, width) {
        let expected = values.len() as f64 * width * fit.density(left + width / 2.0);
        writeln!(out, "{left:.2}\t{count}\t{expected:.4}")?;
    }
    Ok(())
}

/// `label  n  mean  std_dev` per sweep row.
pub fn write_sweep_tsv<W: Write>(mut out: W, results: &[SweepResult]) -> Result<()> {
    writeln!(out, "label\tn\tmean\tstd_dev")?;
    for r in results {
        writeln!(
            out,
            "{}\t{}\t{:.6}\t{:.6}",
            r.label,
            r.accuracies.len(),
            r.mean,
            r.std_dev
        )?;
    }
    Ok(())
}

/// Cross-validates once per seed on prepared folds.
pub fn sweep_seeds(
    label: &str,
    folds: &[FoldFeatures],
    config: &TrainConfig,
    model_size: usize,
    negative_label: i64,
    seeds: &[u64],
) -> Result<SweepResult> {
    if seeds.is_empty() {
        return Err(Error::Config("a sweep needs at least one seed".into()));
    }
    let accuracies = seeds
        .par_iter()
        .map(|&seed| {
            let c = TrainConfig {
                seed,
                ..config.clone()
            };
            cross_validate(folds, &c, model_size, negative_label).map(|r| r.metrics.accuracy)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult::new(label, accuracies))
}

/// Runs every grid point over the same seeds. Points sharing pipeline,
/// static selection and `k` share their fold featurization.
pub fn sweep(ds: &Dataset, grid: &[SweepPoint], seeds: &[u64]) -> Result<Vec<SweepResult>> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let mut prepared: Vec<((PipelineConfig, usize, usize), Vec<FoldFeatures>)> = Vec::new();
    let mut results = Vec::with_capacity(grid.len());
    for point in grid {
        let key = (point.pipeline.clone(), point.train.static_features, point.k);
        let idx = match prepared.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                let folds =
                    prepare_folds(ds, &point.pipeline, point.train.static_features, point.k)?;
                prepared.push((key, folds));
                prepared.len() - 1
            }
        };
        results.push(sweep_seeds(
            &point.label,
            &prepared[idx].1,
            &point.train,
            point.model_size,
            ds.negative_label(),
            seeds,
        )?);
    }
    Ok(results)
}

/// For each size `N`, `n_models` models of `N` representations; model `j`
/// uses seed `base_seed + j`. A model of size `N` is the first `N`
/// representations of the largest one, so every size sees the same
/// representations.
pub fn voting_sweep(
    folds: &[FoldFeatures],
    config: &TrainConfig,
    sizes: &[usize],
    n_models: usize,
    base_seed: u64,
    negative_label: i64,
) -> Result<Vec<SweepResult>> {
    if sizes.is_empty() || sizes.contains(&0) || n_models == 0 {
        return Err(Error::Config(
            "model sizes and model count must be positive".into(),
        ));
    }
    let largest = *sizes.iter().max().expect("nonempty");
    let per_model: Vec<Vec<f64>> = (0..n_models as u64)
        .into_par_iter()
        .map(|j| {
            let c = TrainConfig {
                seed: base_seed.wrapping_add(j),
                ..config.clone()
            };
            let mut pooled = vec![ConfusionMatrix::default(); sizes.len()];
            for fold in folds {
                let full = train_model(&fold.train, &c, largest, negative_label)?;
                for (s, &n) in sizes.iter().enumerate() {
                    let model = Model::new(
                        full.reps()[..n].to_vec(),
                        full.features().to_vec(),
                        full.positive_label(),
                        negative_label,
                    )?;
                    pooled[s] += model_confusion(&model, &fold.test)?;
                }
            }
            Ok(pooled
                .iter()
                .map(|cm| cm.correct() as f64 / cm.total() as f64)
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sizes
        .iter()
        .enumerate()
        .map(|(s, &n)| SweepResult::new(format!("N={n}"), per_model.iter().map(|a| a[s]).collect()))
        .collect())
}
