use std::io::Write;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

impl ConfusionMatrix {
    pub fn new(true_pos: u64, false_pos: u64, false_neg: u64, true_neg: u64) -> Self {
        ConfusionMatrix {
            true_pos,
            false_pos,
            false_neg,
            true_neg,
        }
    }

    /// Tallies one row given its true class and the prediction.
    pub fn record(&mut self, actual_pos: bool, predicted_pos: bool) {
        match (actual_pos, predicted_pos) {
            (true, true) => self.true_pos += 1,
            (false, true) => self.false_pos += 1,
            (true, false) => self.false_neg += 1,
            (false, false) => self.true_neg += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    pub fn correct(&self) -> u64 {
        self.true_pos + self.true_neg
    }

    /// The paper's layout: rows are the true group, columns the inference.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "actual\tinferred_pos\tinferred_neg")?;
        writeln!(out, "pos\t{}\t{}", self.true_pos, self.false_neg)?;
        writeln!(out, "neg\t{}\t{}", self.false_pos, self.true_neg)?;
        Ok(())
    }
}

impl Add for ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn add(self, o: ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix::new(
            self.true_pos + o.true_pos,
            self.false_pos + o.false_pos,
            self.false_neg + o.false_neg,
            self.true_neg + o.true_neg,
        )
    }
}

impl AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, o: ConfusionMatrix) {
        *self = *self + o;
    }
}

impl std::iter::Sum for ConfusionMatrix {
    fn sum<I: Iterator<Item = ConfusionMatrix>>(iter: I) -> Self {
        iter.fold(ConfusionMatrix::default(), Add::add)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub f2: f64,
    pub fp_rate: f64,
    /// Set when some ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

impl Metrics {
    pub const TSV_HEADER: &'static str = "accuracy\tprecision\trecall\tf1\tf2\tfp_rate\tdegenerate";

    pub fn tsv_fields(&self) -> String {
        format!(
            "{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.f2,
            self.fp_rate,
            self.degenerate
        )
    }
}

/// Accuracy, precision, recall, F1, F2 and false-positive rate.
///
/// `F2 = 5·P·R / (4·P + R)`. Undefined ratios are 0 with `degenerate` set.
pub fn metrics_from_confusion(cm: &ConfusionMatrix) -> Result<Metrics> {
    if cm.total() == 0 {
        return Err(Error::EmptyConfusion);
    }
    let mut degenerate = false;
    let mut ratio = |num: f64, den: f64| {
        if den == 0.0 {
            degenerate = true;
            0.0
        } else {
            num / den
        }
    };
    let tp = cm.true_pos as f64;
    let fp = cm.false_pos as f64;
    let fn_ = cm.false_neg as f64;
    let tn = cm.true_neg as f64;
    let accuracy = ratio(tp + tn, tp + fp + fn_ + tn);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let fp_rate = ratio(fp, fp + tn);
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    let f2 = ratio(5.0 * precision * recall, 4.0 * precision + recall);
    Ok(Metrics {
        accuracy,
        precision,
        recall,
        f1,
        f2,
        fp_rate,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) {
        assert!((a - b).abs() <= 1e-4, "{a} vs {b}");
    }

    #[test]
    fn table_five() {
        let m = metrics_from_confusion(&ConfusionMatrix::new(47, 27, 22, 43)).unwrap();
        close(m.accuracy, 0.6475);
        close(m.precision, 0.6351);
        close(m.recall, 0.6812);
        close(m.f1, 0.6573);
        close(m.f2, 0.6714);
        close(m.fp_rate, 0.3857);
        assert!(!m.degenerate);
    }

    #[test]
    fn table_four() {
        let m = metrics_from_confusion(&ConfusionMatrix::new(265, 3, 11, 277)).unwrap();
        close(m.accuracy, 0.9748);
        close(m.precision, 0.9888);
        close(m.recall, 0.9601);
        close(m.fp_rate, 0.0107);
        close(m.f1, 0.9743);
        close(m.f2, 0.9657);
    }

    #[test]
    fn perfect_and_degenerate() {
        let m = metrics_from_confusion(&ConfusionMatrix::new(5, 0, 0, 5)).unwrap();
        assert_eq!([m.accuracy, m.precision, m.recall, m.f1, m.f2], [1.0; 5]);
        assert_eq!(m.fp_rate, 0.0);
        let m = metrics_from_confusion(&ConfusionMatrix::new(0, 0, 3, 4)).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.precision, 0.0);
        assert!(metrics_from_confusion(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn pooling_adds_cells() {
        let a = ConfusionMatrix::new(1, 2, 3, 4);
        let b = ConfusionMatrix::new(4, 3, 2, 1);
        assert_eq!(
            [a, b].into_iter().sum::<ConfusionMatrix>(),
            ConfusionMatrix::new(5, 5, 5, 5)
        );
    }
}
