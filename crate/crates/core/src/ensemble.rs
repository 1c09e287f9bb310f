//! Majority-vote ensembles of representations.

use std::io::{BufRead, Write};

use fixedbitset::FixedBitSet;

use crate::error::{Error, Result};
use crate::evaluation::ConfusionMatrix;
use crate::evolearner::{parse_tree, parse_tree_interning, print_tree, Representation};
use crate::features::{FeatureId, FeatureMatrix};

const MAGIC: &str = "cohortsift-model\t1";

/// An ensemble of representations over one feature table.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    reps: Vec<Representation>,
    features: Vec<FeatureId>,
    positive_label: i64,
    negative_label: i64,
}

/// The ensemble's verdict on one row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vote {
    /// Fraction of representations voting positive.
    pub p_pos: f64,
    pub inferred: i64,
    /// `2·max(p, 1 − p) − 1`; zero on a tie.
    pub confidence: f64,
}

impl Model {
    pub fn new(
        reps: Vec<Representation>,
        features: Vec<FeatureId>,
        positive_label: i64,
        negative_label: i64,
    ) -> Result<Self> {
        if reps.is_empty() {
            return Err(Error::Config(
                "a model needs at least one representation".into(),
            ));
        }
        for rep in &reps {
            if let Some(&index) = rep.tree.features().last() {
                if index >= features.len() {
                    return Err(Error::FeatureIndex {
                        index,
                        width: features.len(),
                    });
                }
            }
        }
        Ok(Model {
            reps,
            features,
            positive_label,
            negative_label,
        })
    }

    pub fn reps(&self) -> &[Representation] {
        &self.reps
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn features(&self) -> &[FeatureId] {
        &self.features
    }

    pub fn positive_label(&self) -> i64 {
        self.positive_label
    }

    pub fn negative_label(&self) -> i64 {
        self.negative_label
    }

    fn vote_from_count(&self, positive_votes: usize) -> Vote {
        vote_from_count(
            positive_votes,
            self.len(),
            self.positive_label,
            self.negative_label,
        )
    }

    /// Votes on one row of the model's feature table.
    pub fn classify(&self, row: &[bool]) -> Result<Vote> {
        if row.len() != self.features.len() {
            return Err(Error::FeatureIndex {
                index: self.features.len(),
                width: row.len(),
            });
        }
        let mut positive = 0;
        for rep in &self.reps {
            if rep.tree.evaluate(row)? {
                positive += 1;
            }
        }
        Ok(self.vote_from_count(positive))
    }

    /// Positive-vote counts for every row of `matrix`, whose features must
    /// be the model's feature table.
    pub fn vote_counts(&self, matrix: &FeatureMatrix) -> Result<Vec<usize>> {
        if matrix.features() != self.features.as_slice() {
            return Err(Error::Config(
                "matrix features differ from the model's feature table".into(),
            ));
        }
        let columns: Vec<&FixedBitSet> =
            (0..matrix.n_features()).map(|j| matrix.column(j)).collect();
        let mut counts = vec![0; matrix.n_rows()];
        for rep in &self.reps {
            for r in rep.tree.evaluate_columns(&columns, matrix.n_rows()).ones() {
                counts[r] += 1;
            }
        }
        Ok(counts)
    }

    pub fn classify_matrix(&self, matrix: &FeatureMatrix) -> Result<Vec<Vote>> {
        Ok(self
            .vote_counts(matrix)?
            .into_iter()
            .map(|c| self.vote_from_count(c))
            .collect())
    }

    /// One representation per line after a header naming the feature-table
    /// file; see `docs/formats.md`.
    pub fn write_to<W: Write>(&self, mut out: W, feature_table: &str) -> Result<()> {
        writeln!(out, "{MAGIC}")?;
        writeln!(out, "features\t{feature_table}")?;
        writeln!(out, "positive\t{}", self.positive_label)?;
        writeln!(out, "negative\t{}", self.negative_label)?;
        writeln!(out, "reps\t{}", self.reps.len())?;
        for rep in &self.reps {
            writeln!(
                out,
                "rep\t{}\t{:?}\t{}\t{}",
                rep.seed,
                rep.train_accuracy,
                rep.evaluations_used,
                print_tree(&rep.tree, &self.features)
            )?;
        }
        Ok(())
    }

    /// Reads a model file. With a feature table the literals must name its
    /// features; without one the table is rebuilt from the literals in
    /// order of first appearance.
    pub fn read_from<R: BufRead>(input: R, features: Option<&[FeatureId]>) -> Result<ModelFile> {
        let mut lines = input.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, line)) => Ok((i + 1, line?)),
                None => Err(Error::Format {
                    line: 0,
                    message: format!("missing {what}"),
                }),
            }
        };
        let bad = |line: usize, message: &str| Error::Format {
            line,
            message: message.to_owned(),
        };
        let (ln, magic) = next("header")?;
        if magic != MAGIC {
            return Err(bad(ln, "not a model file"));
        }
        let mut field = |name: &str| -> Result<(usize, String)> {
            let (ln, line) = next(name)?;
            match line.split_once('\t') {
                Some((k, v)) if k == name => Ok((ln, v.to_owned())),
                _ => Err(bad(ln, &format!("expected `{name}` line"))),
            }
        };
        let (_, feature_table) = field("features")?;
        let (ln, pos) = field("positive")?;
        let positive_label = pos.parse().map_err(|_| bad(ln, "bad positive label"))?;
        let (ln, neg) = field("negative")?;
        let negative_label = neg.parse().map_err(|_| bad(ln, "bad negative label"))?;
        let (ln, count) = field("reps")?;
        let count: usize = count.parse().map_err(|_| bad(ln, "bad rep count"))?;

        let mut table: Vec<FeatureId> = features.map(<[_]>::to_vec).unwrap_or_default();
        let mut reps = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, line) = field("rep")?;
            let parts: Vec<&str> = line.splitn(4, '\t').collect();
            let [seed, acc, evals, text] = parts.as_slice() else {
                return Err(bad(ln, "malformed rep line"));
            };
            let tree = match features {
                Some(f) => parse_tree(text, f),
                None => parse_tree_interning(text, &mut table),
            }
            .map_err(|e| bad(ln, &e.to_string()))?;
            reps.push(Representation {
                tree,
                train_accuracy: acc.parse().map_err(|_| bad(ln, "bad accuracy"))?,
                seed: seed.parse().map_err(|_| bad(ln, "bad seed"))?,
                evaluations_used: evals.parse().map_err(|_| bad(ln, "bad evaluation count"))?,
            });
        }
        Ok(ModelFile {
            feature_table,
            model: Model::new(reps, table, positive_label, negative_label)?,
        })
    }
}

/// A model read back from disk with the feature-table file it names.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub feature_table: String,
    pub model: Model,
}

/// Majority vote from a positive-vote count. An exact tie goes to the
/// negative label with confidence 0.
pub fn vote_from_count(
    positive_votes: usize,
    n: usize,
    positive_label: i64,
    negative_label: i64,
) -> Vote {
    let p_pos = positive_votes as f64 / n as f64;
    let (inferred, confidence) = match (2 * positive_votes).cmp(&n) {
        std::cmp::Ordering::Greater => (positive_label, 2.0 * p_pos - 1.0),
        std::cmp::Ordering::Less => (negative_label, 1.0 - 2.0 * p_pos),
        std::cmp::Ordering::Equal => (negative_label, 0.0),
    };
    Vote {
        p_pos,
        inferred,
        confidence,
    }
}

/// Confusion counts of the model's majority vote on `matrix`.
pub fn model_confusion(model: &Model, matrix: &FeatureMatrix) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::default();
    for (vote, &label) in model.classify_matrix(matrix)?.iter().zip(matrix.labels()) {
        cm.record(
            label == model.positive_label,
            vote.inferred == model.positive_label,
        );
    }
    Ok(cm)
}

/// Rows per `p_pos` bin, split by true label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteHistogram {
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
}

impl VoteHistogram {
    pub fn bins(&self) -> usize {
        self.positive.len()
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "bin_left\tpositive\tnegative")?;
        let bins = self.bins();
        for b in 0..bins {
            writeln!(
                out,
                "{:.4}\t{}\t{}",
                b as f64 / bins as f64,
                self.positive[b],
                self.negative[b]
            )?;
        }
        Ok(())
    }
}

/// Bin `b` holds `p_pos` in `[b/bins, (b+1)/bins)`; the last bin is closed.
pub fn vote_bin(positive_votes: usize, n: usize, bins: usize) -> usize {
    // Integer arithmetic keeps bin edges exact.
    ((positive_votes * bins) / n).min(bins - 1)
}

pub fn vote_histogram(model: &Model, matrix: &FeatureMatrix, bins: usize) -> Result<VoteHistogram> {
    if bins < 2 {
        return Err(Error::Config(
            "a vote histogram needs at least 2 bins".into(),
        ));
    }
    let mut hist = VoteHistogram {
        positive: vec![0; bins],
        negative: vec![0; bins],
    };
    for (count, &label) in model.vote_counts(matrix)?.into_iter().zip(matrix.labels()) {
        let b = vote_bin(count, model.len(), bins);
        if label == model.positive_label {
            hist.positive[b] += 1;
        } else {
            hist.negative[b] += 1;
        }
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolearner::ProgramTree as T;

    fn rep(tree: T) -> Representation {
        Representation {
            tree,
            train_accuracy: 1.0,
            seed: 0,
            evaluations_used: 1,
        }
    }

    fn matrix() -> FeatureMatrix {
        let rows = vec![
            vec![true, true, false],
            vec![true, false, false],
            vec![false, false, true],
            vec![false, true, true],
        ];
        FeatureMatrix::from_bool_rows(&rows, &[true, true, false, false])
    }

    #[test]
    fn two_of_three() {
        let m = matrix();
        let model = Model::new(
            vec![rep(T::lit(0)), rep(T::lit(1)), rep(T::lit(2))],
            m.features().to_vec(),
            1,
            0,
        )
        .unwrap();
        let v = model.classify(&[true, true, false]).unwrap();
        assert_eq!(v.p_pos, 2.0 / 3.0);
        assert_eq!(v.inferred, 1);
        assert!((v.confidence - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn even_split_is_negative() {
        let m = matrix();
        let model = Model::new(
            vec![rep(T::lit(0)), rep(T::lit(2))],
            m.features().to_vec(),
            1,
            0,
        )
        .unwrap();
        let v = model.classify(&[true, false, true]).unwrap();
        assert_eq!((v.p_pos, v.confidence), (1.0, 1.0));
        let v = model.classify(&[true, false, false]).unwrap();
        assert_eq!((v.p_pos, v.inferred, v.confidence), (0.5, 0, 0.0));
    }

    #[test]
    fn inverted_model_swaps_cells() {
        let m = matrix();
        let good = Model::new(vec![rep(T::lit(0))], m.features().to_vec(), 1, 0).unwrap();
        let bad = Model::new(vec![rep(T::not(0))], m.features().to_vec(), 1, 0).unwrap();
        let a = model_confusion(&good, &m).unwrap();
        let b = model_confusion(&bad, &m).unwrap();
        assert_eq!(a, ConfusionMatrix::new(2, 0, 0, 2));
        assert_eq!(
            (b.true_pos, b.false_neg, b.true_neg, b.false_pos),
            (a.false_neg, a.true_pos, a.false_pos, a.true_neg)
        );
    }

    #[test]
    fn histogram_edges() {
        assert_eq!(vote_bin(0, 10, 10), 0);
        assert_eq!(vote_bin(1, 10, 10), 1);
        assert_eq!(vote_bin(10, 10, 10), 9);
        assert_eq!(vote_bin(9, 10, 10), 9);
        let m = matrix();
        let model = Model::new(
            vec![rep(T::and(vec![T::lit(0), T::not(0)]))],
            m.features().to_vec(),
            1,
            0,
        )
        .unwrap();
        let h = vote_histogram(&model, &m, 10).unwrap();
        assert_eq!(h.positive[0], 2);
        assert_eq!(h.negative[0], 2);
    }

    #[test]
    fn file_round_trip() {
        let m = matrix();
        let model = Model::new(
            vec![rep(T::or(vec![T::lit(0), T::not(2)])), rep(T::lit(1))],
            m.features().to_vec(),
            2,
            3,
        )
        .unwrap();
        let mut buf = Vec::new();
        model.write_to(&mut buf, "train.fm").unwrap();
        let back = Model::read_from(&buf[..], Some(m.features())).unwrap();
        assert_eq!(back.feature_table, "train.fm");
        assert_eq!(back.model, model);
        let loose = Model::read_from(&buf[..], None).unwrap();
        let mut again = Vec::new();
        loose.model.write_to(&mut again, "train.fm").unwrap();
        assert_eq!(again, buf);
    }
}
