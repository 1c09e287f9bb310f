//! Count thresholding into boolean features, and class mutual information.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use fixedbitset::FixedBitSet;

use crate::error::{Error, Result};
use crate::phrases::NGram;

/// Stand-in for non-positive thresholds: the smallest positive `f64`, so the
/// feature reads "occurs at all".
pub const MIN_THRESHOLD: f64 = f64::from_bits(1);

/// Per-record counts of a set of terms, stored sparsely by term.
#[derive(Debug, Clone, Default)]
pub struct TermCounts {
    record_ids: Vec<String>,
    labels: Vec<i64>,
    by_term: BTreeMap<NGram, Vec<(usize, f64)>>,
}

impl TermCounts {
    /// `maps[i]` holds the counts of record `i`.
    pub fn from_maps(
        record_ids: Vec<String>,
        labels: Vec<i64>,
        maps: &[&BTreeMap<NGram, f64>],
    ) -> Self {
        assert_eq!(record_ids.len(), labels.len());
        assert_eq!(record_ids.len(), maps.len());
        let mut by_term: BTreeMap<NGram, Vec<(usize, f64)>> = BTreeMap::new();
        for (row, map) in maps.iter().enumerate() {
            for (term, &count) in map.iter() {
                if count != 0.0 {
                    by_term.entry(term.clone()).or_default().push((row, count));
                }
            }
        }
        TermCounts {
            record_ids,
            labels,
            by_term,
        }
    }

    pub fn n_records(&self) -> usize {
        self.record_ids.len()
    }

    pub fn record_ids(&self) -> &[String] {
        &self.record_ids
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn terms(&self) -> impl Iterator<Item = &NGram> {
        self.by_term.keys()
    }

    /// Sum over records.
    pub fn total(&self, term: &NGram) -> f64 {
        self.by_term
            .get(term)
            .map(|v| v.iter().map(|(_, c)| c).sum())
            .unwrap_or(0.0)
    }

    pub fn totals(&self) -> BTreeMap<NGram, f64> {
        self.by_term
            .iter()
            .map(|(t, v)| (t.clone(), v.iter().map(|(_, c)| c).sum()))
            .collect()
    }

    /// Counts of `term` for every record, zeros included.
    pub fn dense(&self, term: &NGram) -> Vec<f64> {
        let mut out = vec![0.0; self.n_records()];
        if let Some(entries) = self.by_term.get(term) {
            for &(row, count) in entries {
                out[row] = count;
            }
        }
        out
    }
}

/// Thresholds from the mean and population standard deviation of a term's
/// per-record counts: `[mean]`, `[mean − σ, mean + σ]` or
/// `[mean − σ, mean, mean + σ]`. Non-positive values become
/// [`MIN_THRESHOLD`].
pub fn compute_thresholds(counts: &[f64], num_thresholds: usize) -> Result<Vec<f64>> {
    if !(1..=3).contains(&num_thresholds) {
        return Err(Error::ThresholdCount(num_thresholds));
    }
    if counts.is_empty() {
        return Err(Error::NoRecords);
    }
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    let raw = match num_thresholds {
        1 => vec![mean],
        2 => vec![mean - sd, mean + sd],
        _ => vec![mean - sd, mean, mean + sd],
    };
    Ok(raw
        .into_iter()
        .map(|t| if t > 0.0 { t } else { MIN_THRESHOLD })
        .collect())
}

/// Thresholds for every term, all with the same count.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSpec {
    num_thresholds: usize,
    per_term: BTreeMap<NGram, Vec<f64>>,
}

impl ThresholdSpec {
    pub fn fit<'a>(
        counts: &TermCounts,
        terms: impl IntoIterator<Item = &'a NGram>,
        num_thresholds: usize,
    ) -> Result<Self> {
        let mut per_term = BTreeMap::new();
        for term in terms {
            per_term.insert(
                term.clone(),
                compute_thresholds(&counts.dense(term), num_thresholds)?,
            );
        }
        Ok(ThresholdSpec {
            num_thresholds,
            per_term,
        })
    }

    pub fn num_thresholds(&self) -> usize {
        self.num_thresholds
    }

    pub fn get(&self, term: &NGram) -> Option<&[f64]> {
        self.per_term.get(term).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NGram, &[f64])> {
        self.per_term.iter().map(|(t, v)| (t, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.per_term.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_term.is_empty()
    }

    /// `term  t1 [t2 [t3]]`, thresholds in shortest round-trip notation.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "term\tthresholds")?;
        for (term, ts) in &self.per_term {
            write!(out, "{term}")?;
            for t in ts {
                write!(out, "\t{t:?}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// A thresholded term: true when the term occurs `threshold` or more times.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureId {
    pub term: NGram,
    pub threshold: f64,
}

impl FeatureId {
    pub fn new(term: NGram, threshold: f64) -> Self {
        FeatureId { term, threshold }
    }

    /// Parses the `$TERM_t1.3` form produced by `Display`.
    pub fn parse(name: &str) -> Option<Self> {
        let body = name.strip_prefix('$')?;
        let (term, threshold) = body.rsplit_once("_t")?;
        if term.is_empty() {
            return None;
        }
        Some(FeatureId {
            term: NGram::parse(term),
            threshold: threshold.parse().ok()?,
        })
    }
}

impl Eq for FeatureId {}

impl Ord for FeatureId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.term
            .cmp(&other.term)
            .then_with(|| self.threshold.total_cmp(&other.threshold))
    }
}

impl PartialOrd for FeatureId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Debug formatting of f64 is the shortest string that parses back to
        // the same value, and switches to exponent notation for tiny values.
        write!(f, "${}_t{:?}", self.term, self.threshold)
    }
}

/// Boolean features (columns) over records (rows), stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    record_ids: Vec<String>,
    labels: Vec<i64>,
    positive_label: i64,
    features: Vec<FeatureId>,
    columns: Vec<FixedBitSet>,
}

impl FeatureMatrix {
    pub fn new(
        record_ids: Vec<String>,
        labels: Vec<i64>,
        positive_label: i64,
        features: Vec<FeatureId>,
        columns: Vec<FixedBitSet>,
    ) -> Self {
        assert_eq!(record_ids.len(), labels.len());
        assert_eq!(features.len(), columns.len());
        assert!(columns.iter().all(|c| c.len() == labels.len()));
        FeatureMatrix {
            record_ids,
            labels,
            positive_label,
            features,
            columns,
        }
    }

    /// Builds from row-major booleans; record ids default to the row index.
    pub fn from_rows(
        features: Vec<FeatureId>,
        rows: &[Vec<bool>],
        labels: Vec<i64>,
        positive_label: i64,
    ) -> Self {
        let n = rows.len();
        let mut columns = vec![FixedBitSet::with_capacity(n); features.len()];
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), features.len());
            for (c, &v) in row.iter().enumerate() {
                columns[c].set(r, v);
            }
        }
        let ids = (0..n).map(|i| i.to_string()).collect();
        FeatureMatrix::new(ids, labels, positive_label, features, columns)
    }

    /// Anonymous features `$F<j>_t1.0`, handy for synthetic matrices.
    pub fn from_bool_rows(rows: &[Vec<bool>], targets: &[bool]) -> Self {
        let width = rows.first().map_or(0, Vec::len);
        let features = (0..width)
            .map(|j| FeatureId::new(NGram::unigram(format!("F{j}")), 1.0))
            .collect();
        let labels = targets.iter().map(|&t| if t { 1 } else { 0 }).collect();
        FeatureMatrix::from_rows(features, rows, labels, 1)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[FeatureId] {
        &self.features
    }

    pub fn record_ids(&self) -> &[String] {
        &self.record_ids
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn positive_label(&self) -> i64 {
        self.positive_label
    }

    pub fn column(&self, feature: usize) -> &FixedBitSet {
        &self.columns[feature]
    }

    pub fn get(&self, row: usize, feature: usize) -> bool {
        self.columns[feature].contains(row)
    }

    pub fn row(&self, row: usize) -> Vec<bool> {
        self.columns.iter().map(|c| c.contains(row)).collect()
    }

    /// Rows whose label is the positive cohort.
    pub fn targets(&self) -> FixedBitSet {
        let mut bits = FixedBitSet::with_capacity(self.n_rows());
        for (i, &l) in self.labels.iter().enumerate() {
            bits.set(i, l == self.positive_label);
        }
        bits
    }

    pub fn select_columns(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            record_ids: self.record_ids.clone(),
            labels: self.labels.clone(),
            positive_label: self.positive_label,
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            columns: indices.iter().map(|&i| self.columns[i].clone()).collect(),
        }
    }

    /// Same rows with labels replaced.
    pub fn with_labels(&self, labels: Vec<i64>) -> FeatureMatrix {
        assert_eq!(labels.len(), self.n_rows());
        FeatureMatrix {
            labels,
            ..self.clone()
        }
    }

    /// Dense bit-packed serialization with a text header; see `docs/formats.md`.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "cohortsift-feature-matrix\t1")?;
        writeln!(
            out,
            "rows\t{}\tfeatures\t{}\tpositive\t{}",
            self.n_rows(),
            self.n_features(),
            self.positive_label
        )?;
        for f in &self.features {
            writeln!(out, "feature\t{}\t{:?}", f.term, f.threshold)?;
        }
        for (id, label) in self.record_ids.iter().zip(&self.labels) {
            if id.contains(['\t', '\n', '\r']) {
                return Err(Error::Format {
                    line: 0,
                    message: format!("record id {id:?} contains a tab or newline"),
                });
            }
            writeln!(out, "record\t{id}\t{label}")?;
        }
        writeln!(out, "data")?;
        let stride = self.n_features().div_ceil(8);
        let mut buf = vec![0u8; stride];
        for r in 0..self.n_rows() {
            buf.iter_mut().for_each(|b| *b = 0);
            for (c, col) in self.columns.iter().enumerate() {
                if col.contains(r) {
                    buf[c / 8] |= 1 << (c % 8);
                }
            }
            out.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut input: R) -> Result<FeatureMatrix> {
        let mut line_no = 0;
        let mut next_line = |input: &mut R| -> Result<(usize, String)> {
            let mut line = String::new();
            line_no += 1;
            if input.read_line(&mut line)? == 0 {
                return Err(Error::Format {
                    line: line_no,
                    message: "unexpected end of file".into(),
                });
            }
            Ok((line_no, line.trim_end_matches(['\n', '\r']).to_owned()))
        };
        let bad = |line: usize, message: &str| Error::Format {
            line,
            message: message.to_owned(),
        };

        let (ln, magic) = next_line(&mut input)?;
        if magic != "cohortsift-feature-matrix\t1" {
            return Err(bad(ln, "not a feature matrix file"));
        }
        let (ln, dims) = next_line(&mut input)?;
        let parts: Vec<&str> = dims.split('\t').collect();
        let (n_rows, n_features, positive_label) = match parts.as_slice() {
            ["rows", r, "features", f, "positive", p] => (
                r.parse::<usize>().map_err(|_| bad(ln, "bad row count"))?,
                f.parse::<usize>()
                    .map_err(|_| bad(ln, "bad feature count"))?,
                p.parse::<i64>()
                    .map_err(|_| bad(ln, "bad positive label"))?,
            ),
            _ => return Err(bad(ln, "malformed dimensions line")),
        };
        let mut features = Vec::with_capacity(n_features);
        for _ in 0..n_features {
            let (ln, line) = next_line(&mut input)?;
            match line.split('\t').collect::<Vec<_>>().as_slice() {
                ["feature", term, t] => features.push(FeatureId::new(
                    NGram::parse(term),
                    t.parse().map_err(|_| bad(ln, "bad threshold"))?,
                )),
                _ => return Err(bad(ln, "malformed feature line")),
            }
        }
        let mut record_ids = Vec::with_capacity(n_rows);
        let mut labels = Vec::with_capacity(n_rows);
        for _ in 0..n_rows {
            let (ln, line) = next_line(&mut input)?;
            match line.split('\t').collect::<Vec<_>>().as_slice() {
                ["record", id, label] => {
                    record_ids.push((*id).to_owned());
                    labels.push(label.parse().map_err(|_| bad(ln, "bad label"))?);
                }
                _ => return Err(bad(ln, "malformed record line")),
            }
        }
        let (ln, marker) = next_line(&mut input)?;
        if marker != "data" {
            return Err(bad(ln, "missing data marker"));
        }
        let stride = n_features.div_ceil(8);
        let mut data = vec![0u8; stride * n_rows];
        input.read_exact(&mut data)?;
        let mut columns = vec![FixedBitSet::with_capacity(n_rows); n_features];
        for r in 0..n_rows {
            let row = &data[r * stride..(r + 1) * stride];
            for (c, col) in columns.iter_mut().enumerate() {
                if row[c / 8] & (1 << (c % 8)) != 0 {
                    col.insert(r);
                }
            }
        }
        Ok(FeatureMatrix::new(
            record_ids,
            labels,
            positive_label,
            features,
            columns,
        ))
    }
}

/// Thresholds every term; feature `(term, t)` is true when the record's count
/// is at least `t`. Equal thresholds of one term collapse into one feature.
pub fn binarize(
    counts: &TermCounts,
    spec: &ThresholdSpec,
    terms: &[NGram],
    positive_label: i64,
) -> Result<FeatureMatrix> {
    let n = counts.n_records();
    let mut features = Vec::new();
    let mut columns = Vec::new();
    for term in terms {
        let thresholds = spec
            .get(term)
            .ok_or_else(|| Error::UnknownFeature(term.to_string()))?;
        let mut distinct: Vec<f64> = thresholds.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let entries = counts.by_term.get(term);
        for &t in &distinct {
            let mut col = FixedBitSet::with_capacity(n);
            if let Some(entries) = entries {
                for &(row, count) in entries {
                    if count >= t {
                        col.insert(row);
                    }
                }
            }
            features.push(FeatureId::new(term.clone(), t));
            columns.push(col);
        }
    }
    Ok(FeatureMatrix::new(
        counts.record_ids.clone(),
        counts.labels.clone(),
        positive_label,
        features,
        columns,
    ))
}

/// Class-MI of one column, with the joint count of the winning cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiScore {
    pub mi: f64,
    /// Number of rows in the cell that attains `mi`.
    pub support: usize,
}

impl MiScore {
    /// Descending MI, then descending support. Support is ignored for
    /// uninformative columns (MI of zero).
    pub fn rank_cmp(&self, other: &MiScore) -> Ordering {
        other.mi.total_cmp(&self.mi).then_with(|| {
            if self.mi > 0.0 {
                other.support.cmp(&self.support)
            } else {
                Ordering::Equal
            }
        })
    }
}

/// Class-MI from the four marginal counts.
///
/// Each cell's pointwise MI is computed as `log2(c·n / (c_g·c_v))` from
/// integer counts, so cells with equal rational ratios give bit-identical
/// scores.
pub fn class_mi_counts(n: usize, n_pos: usize, n_true: usize, n_pos_true: usize) -> MiScore {
    let n_neg = n - n_pos;
    let n_false = n - n_true;
    let cells = [
        (n_pos_true, n_pos, n_true),
        (n_pos - n_pos_true, n_pos, n_false),
        (n_true - n_pos_true, n_neg, n_true),
        (n_neg - (n_true - n_pos_true), n_neg, n_false),
    ];
    let mut best: Option<MiScore> = None;
    for (joint, group, value) in cells {
        if joint == 0 {
            continue;
        }
        let mi = ((joint as f64 * n as f64) / (group as f64 * value as f64)).log2();
        let candidate = MiScore { mi, support: joint };
        if best.is_none_or(|b| candidate.rank_cmp(&b) == Ordering::Less) {
            best = Some(candidate);
        }
    }
    best.unwrap_or(MiScore {
        mi: 0.0,
        support: 0,
    })
}

/// Largest pointwise MI between a boolean column and binary labels over the
/// four (label, value) cells. Cells that never occur are skipped, so a column
/// that anti-correlates with the labels scores as high as one that
/// correlates.
pub fn class_mi(column: &[bool], labels: &[bool]) -> f64 {
    assert_eq!(column.len(), labels.len());
    let n = column.len();
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_true = column.iter().filter(|&&v| v).count();
    let n_pos_true = column.iter().zip(labels).filter(|(&v, &l)| v && l).count();
    class_mi_counts(n, n_pos, n_true, n_pos_true).mi
}

pub(crate) fn class_mi_bits(column: &FixedBitSet, labels: &FixedBitSet, n_pos: usize) -> MiScore {
    let n = labels.len();
    let n_true = column.count_ones(..);
    let n_pos_true = column.intersection_count(labels);
    class_mi_counts(n, n_pos, n_true, n_pos_true)
}

/// Every column's class-MI score against the matrix's targets.
pub fn column_scores(matrix: &FeatureMatrix) -> Vec<MiScore> {
    let targets = matrix.targets();
    let n_pos = targets.count_ones(..);
    matrix
        .columns
        .iter()
        .map(|c| class_mi_bits(c, &targets, n_pos))
        .collect()
}

/// Column indices ordered best first: class-MI descending, then support
/// descending, then feature order (term, threshold).
pub fn rank_features(matrix: &FeatureMatrix) -> Vec<usize> {
    let scores = column_scores(matrix);
    let mut order: Vec<usize> = (0..matrix.n_features()).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .rank_cmp(&scores[b])
            .then_with(|| matrix.features[a].cmp(&matrix.features[b]))
    });
    order
}

/// The `n` best columns by [`rank_features`], in rank order.
pub fn select_static(matrix: &FeatureMatrix, n: usize) -> FeatureMatrix {
    let mut order = rank_features(matrix);
    order.truncate(n.max(1));
    matrix.select_columns(&order)
}
