use rayon::prelude::*;

use super::metrics::{metrics_from_confusion, ConfusionMatrix, Metrics};
use crate::ensemble::{model_confusion, Model};
use crate::error::{Error, Result};
use crate::evolearner::{train_representation, TrainConfig};
use crate::features::FeatureMatrix;
use crate::pipeline::{prepare_fold, Dataset, FoldFeatures, PipelineConfig};

/// Round-robin folds over `n` records: record `i` goes to fold `i mod k`.
pub fn kfold_split(n: usize, k: usize) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::InvalidFolds { k, records: n });
    }
    let mut folds = vec![Vec::with_capacity(n.div_ceil(k)); k];
    for i in 0..n {
        folds[i % k].push(i);
    }
    Ok(folds)
}

/// Seed of representation `index` in the model seeded with `model_seed`
/// (SplitMix64 finalizer over both).
pub fn rep_seed(model_seed: u64, index: u64) -> u64 {
    let mut z = model_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_classes(matrix: &FeatureMatrix, fold: usize, part: &'static str) -> Result<()> {
    let pos = matrix.targets().count_ones(..);
    if pos == 0 || pos == matrix.n_rows() {
        return Err(Error::SingleClassFold { fold, part });
    }
    Ok(())
}

/// Featurizes every fold from its own training records. Folds are
/// independent and prepared in parallel.
pub fn prepare_folds(
    ds: &Dataset,
    config: &PipelineConfig,
    static_features: usize,
    k: usize,
) -> Result<Vec<FoldFeatures>> {
    let folds = kfold_split(ds.len(), k)?;
    (0..k)
        .into_par_iter()
        .map(|f| {
            let test = &folds[f];
            let train: Vec<usize> = (0..ds.len()).filter(|i| i % k != f).collect();
            let prepared = prepare_fold(ds, &train, test, config, static_features)?;
            check_classes(&prepared.train, f, "training")?;
            check_classes(&prepared.test, f, "test")?;
            Ok(prepared)
        })
        .collect()
}

/// Trains `size` representations with seeds `rep_seed(config.seed, i)`.
pub fn train_model(
    matrix: &FeatureMatrix,
    config: &TrainConfig,
    size: usize,
    negative_label: i64,
) -> Result<Model> {
    if size == 0 {
        return Err(Error::Config("model size must be at least 1".into()));
    }
    let reps = (0..size as u64)
        .into_par_iter()
        .map(|i| {
            let c = TrainConfig {
                seed: rep_seed(config.seed, i),
                ..config.clone()
            };
            train_representation(matrix, &c)
        })
        .collect::<Result<Vec<_>>>()?;
    Model::new(
        reps,
        matrix.features().to_vec(),
        matrix.positive_label(),
        negative_label,
    )
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub model: Model,
    pub train: ConfusionMatrix,
    pub test: ConfusionMatrix,
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub folds: Vec<FoldResult>,
    /// Sum of the per-fold test matrices.
    pub pooled: ConfusionMatrix,
    pub metrics: Metrics,
    pub pooled_train: ConfusionMatrix,
}

/// Trains one model per prepared fold and scores it on the held-out rows.
pub fn cross_validate(
    folds: &[FoldFeatures],
    config: &TrainConfig,
    model_size: usize,
    negative_label: i64,
) -> Result<CvResult> {
    config.validate()?;
    let results = folds
        .par_iter()
        .map(|fold| {
            let model = train_model(&fold.train, config, model_size, negative_label)?;
            Ok(FoldResult {
                train: model_confusion(&model, &fold.train)?,
                test: model_confusion(&model, &fold.test)?,
                model,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pooled: ConfusionMatrix = results.iter().map(|r| r.test).sum();
    let pooled_train: ConfusionMatrix = results.iter().map(|r| r.train).sum();
    Ok(CvResult {
        metrics: metrics_from_confusion(&pooled)?,
        folds: results,
        pooled,
        pooled_train,
    })
}
