//! Per-fold featurization: cuts, thresholds and static selection fitted on
//! training records, then applied unchanged to held-out records.

use std::collections::{BTreeMap, BTreeSet};

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::features::{
    binarize, select_static, FeatureId, FeatureMatrix, TermCounts, ThresholdSpec,
};
use crate::phrases::{apply_cuts, term_counts, CutSpec, NGram, PairStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Largest n-gram arity, 1 (words only) to 4.
    pub arity: usize,
    pub cuts: CutSpec,
    pub num_thresholds: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            arity: 1,
            cuts: CutSpec::default(),
            num_thresholds: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.arity) {
            return Err(Error::Config(format!(
                "arity must be 1..=4, got {}",
                self.arity
            )));
        }
        if !(1..=3).contains(&self.num_thresholds) {
            return Err(Error::ThresholdCount(self.num_thresholds));
        }
        Ok(())
    }
}

/// The records of two cohorts with their per-record term counts.
#[derive(Debug, Clone)]
pub struct Dataset {
    ids: Vec<String>,
    labels: Vec<i64>,
    notes: Vec<Vec<Vec<String>>>,
    terms: Vec<BTreeMap<NGram, f64>>,
    positive_label: i64,
    negative_label: i64,
}

impl Dataset {
    /// Keeps the records of the two cohorts in corpus order.
    pub fn new(
        corpus: &Corpus,
        positive_label: i64,
        negative_label: i64,
        arity: usize,
    ) -> Result<Self> {
        let present = corpus.labels();
        for label in [positive_label, negative_label] {
            if !present.contains(&label) {
                return Err(Error::MissingCohort(label));
            }
        }
        if positive_label == negative_label {
            return Err(Error::Config(
                "positive and negative cohorts must differ".into(),
            ));
        }
        let mut ds = Dataset {
            ids: Vec::new(),
            labels: Vec::new(),
            notes: Vec::new(),
            terms: Vec::new(),
            positive_label,
            negative_label,
        };
        for (i, rec) in corpus.records().iter().enumerate() {
            if rec.group != positive_label && rec.group != negative_label {
                continue;
            }
            let notes = corpus.record_notes(i).to_vec();
            ds.terms.push(term_counts(&notes, arity));
            ds.notes.push(notes);
            ds.ids.push(rec.id.clone());
            ds.labels.push(rec.group);
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn positive_label(&self) -> i64 {
        self.positive_label
    }

    pub fn negative_label(&self) -> i64 {
        self.negative_label
    }

    pub fn term_map(&self, row: usize) -> &BTreeMap<NGram, f64> {
        &self.terms[row]
    }

    /// Same records with labels replaced, e.g. shuffled for a null control.
    pub fn with_labels(&self, labels: Vec<i64>) -> Dataset {
        assert_eq!(labels.len(), self.len());
        Dataset {
            labels,
            ..self.clone()
        }
    }
}

/// Everything fitted on one fold's training records.
#[derive(Debug, Clone)]
pub struct FoldFeatures {
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    /// Terms surviving the cuts.
    pub terms: BTreeSet<NGram>,
    pub thresholds: ThresholdSpec,
    /// Training matrix restricted to the statically selected features.
    pub train: FeatureMatrix,
    /// Held-out rows over the same features.
    pub test: FeatureMatrix,
}

/// Fits cuts, thresholds and static selection on `train_rows` only.
pub fn prepare_fold(
    ds: &Dataset,
    train_rows: &[usize],
    test_rows: &[usize],
    config: &PipelineConfig,
    static_features: usize,
) -> Result<FoldFeatures> {
    config.validate()?;
    if train_rows.is_empty() {
        return Err(Error::NoRecords);
    }
    let mut totals: BTreeMap<NGram, f64> = BTreeMap::new();
    let mut word_totals: BTreeMap<String, f64> = BTreeMap::new();
    for &r in train_rows {
        for (term, &c) in ds.terms[r]
            .iter()
            .filter(|(t, _)| t.arity() <= config.arity)
        {
            *totals.entry(term.clone()).or_default() += c;
            if term.arity() == 1 {
                *word_totals.entry(term.words()[0].clone()).or_default() += c;
            }
        }
    }
    let stats = if config.arity >= 2 && config.cuts.min_mi.is_some() {
        PairStats::from_notes(train_rows.iter().flat_map(|&r| ds.notes[r].iter()))
    } else {
        PairStats::new()
    };
    let terms = apply_cuts(&totals, &word_totals, &stats, &config.cuts);
    if terms.is_empty() {
        return Err(Error::Config("no terms survive the cuts".into()));
    }

    let ids: Vec<String> = train_rows.iter().map(|&r| ds.ids[r].clone()).collect();
    let labels: Vec<i64> = train_rows.iter().map(|&r| ds.labels[r]).collect();
    let maps: Vec<&BTreeMap<NGram, f64>> = train_rows.iter().map(|&r| &ds.terms[r]).collect();
    let counts = TermCounts::from_maps(ids, labels, &maps);
    let thresholds = ThresholdSpec::fit(&counts, terms.iter(), config.num_thresholds)?;
    let ordered: Vec<NGram> = terms.iter().cloned().collect();
    let full = binarize(&counts, &thresholds, &ordered, ds.positive_label)?;
    let train = select_static(&full, static_features);
    let test = featurize(ds, test_rows, train.features());
    Ok(FoldFeatures {
        train_rows: train_rows.to_vec(),
        test_rows: test_rows.to_vec(),
        terms,
        thresholds,
        train,
        test,
    })
}

/// Matrix of `rows` over fixed features: true when the count reaches the
/// threshold.
pub fn featurize(ds: &Dataset, rows: &[usize], features: &[FeatureId]) -> FeatureMatrix {
    let columns = features
        .iter()
        .map(|f| {
            let mut col = FixedBitSet::with_capacity(rows.len());
            for (i, &r) in rows.iter().enumerate() {
                if ds.terms[r].get(&f.term).is_some_and(|&c| c >= f.threshold) {
                    col.insert(i);
                }
            }
            col
        })
        .collect();
    FeatureMatrix::new(
        rows.iter().map(|&r| ds.ids[r].clone()).collect(),
        rows.iter().map(|&r| ds.labels[r]).collect(),
        ds.positive_label,
        features.to_vec(),
        columns,
    )
}
