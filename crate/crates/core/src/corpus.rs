//! Record ingestion, tokenization and corpus-wide token statistics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One patient: an opaque id, a cohort label and the free-text notes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    pub group: i64,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl PatientRecord {
    pub fn new(id: impl Into<String>, group: i64, notes: Vec<String>) -> Self {
        PatientRecord {
            id: id.into(),
            group,
            notes,
        }
    }
}

/// Splits free text into normalized tokens.
///
/// Hyphens and underscores are deleted first so that joined words fuse into a
/// single run-on word. Every other character outside `[A-Za-z0-9]` separates
/// tokens, and letters are upper-cased. Digits are kept.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        match ch {
            '-' | '_' => {}
            c if c.is_ascii_alphanumeric() => current.push(c.to_ascii_uppercase()),
            _ => {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
            }
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Tokenized records with per-record and corpus-wide counts.
///
/// Immutable once built. Counts are real-valued so that normalized counts can
/// be carried through unchanged; ingestion of raw text produces integers.
#[derive(Debug, Clone)]
pub struct Corpus {
    records: Vec<PatientRecord>,
    notes: Vec<Vec<Vec<String>>>,
    counts: Vec<BTreeMap<String, f64>>,
    totals: BTreeMap<String, f64>,
}

/// Tokenizes every note and tallies counts. Record ids must be unique.
pub fn build_corpus(records: Vec<PatientRecord>) -> Result<Corpus> {
    let mut seen = HashSet::with_capacity(records.len());
    for record in &records {
        if !seen.insert(record.id.as_str()) {
            return Err(Error::DuplicateId(record.id.clone()));
        }
    }

    let mut notes = Vec::with_capacity(records.len());
    let mut counts = Vec::with_capacity(records.len());
    let mut totals: BTreeMap<String, f64> = BTreeMap::new();
    for record in &records {
        let tokenized: Vec<Vec<String>> = record.notes.iter().map(|n| tokenize(n)).collect();
        let mut record_counts: BTreeMap<String, f64> = BTreeMap::new();
        for token in tokenized.iter().flatten() {
            *record_counts.entry(token.clone()).or_default() += 1.0;
        }
        for (token, count) in &record_counts {
            *totals.entry(token.clone()).or_default() += count;
        }
        notes.push(tokenized);
        counts.push(record_counts);
    }
    totals.retain(|_, c| *c > 0.0);

    Ok(Corpus {
        records,
        notes,
        counts,
        totals,
    })
}

impl Corpus {
    pub fn records(&self) -> &[PatientRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Tokenized notes of record `index`, one token sequence per note.
    pub fn record_notes(&self, index: usize) -> &[Vec<String>] {
        &self.notes[index]
    }

    pub fn record_counts(&self, index: usize) -> &BTreeMap<String, f64> {
        &self.counts[index]
    }

    pub fn count(&self, index: usize, token: &str) -> f64 {
        self.counts[index].get(token).copied().unwrap_or(0.0)
    }

    pub fn totals(&self) -> &BTreeMap<String, f64> {
        &self.totals
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.totals.keys().map(String::as_str)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.totals.len()
    }

    pub fn total_count(&self) -> f64 {
        self.totals.values().sum()
    }

    /// Distinct cohort labels, ascending.
    pub fn labels(&self) -> BTreeSet<i64> {
        self.records.iter().map(|r| r.group).collect()
    }
}

/// A token's position in the frequency-sorted vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub token: String,
    pub count: f64,
    /// 1-based.
    pub rank: usize,
    pub normalized_frequency: f64,
}

/// Vocabulary sorted by descending count; equal counts are ordered by token.
pub fn rank_distribution(corpus: &Corpus) -> Result<Vec<RankEntry>> {
    rank_totals(corpus.totals())
}

/// [`rank_distribution`] over an explicit token → count table.
pub fn rank_totals(totals: &BTreeMap<String, f64>) -> Result<Vec<RankEntry>> {
    let mut items: Vec<(&String, f64)> = totals
        .iter()
        .filter(|(_, c)| **c > 0.0)
        .map(|(t, c)| (t, *c))
        .collect();
    if items.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    // BTreeMap iteration is already lexicographic, so a stable sort on count
    // alone leaves ties in token order.
    items.sort_by(|a, b| b.1.total_cmp(&a.1));
    let total: f64 = items.iter().map(|(_, c)| c).sum();
    Ok(items
        .into_iter()
        .enumerate()
        .map(|(i, (token, count))| RankEntry {
            token: token.clone(),
            count,
            rank: i + 1,
            normalized_frequency: count / total,
        })
        .collect())
}

/// For each threshold, the number of distinct tokens occurring at least that
/// many times.
pub fn word_occurrence_table(corpus: &Corpus, thresholds: &[u64]) -> BTreeMap<u64, usize> {
    let mut sorted: Vec<f64> = corpus.totals().values().copied().collect();
    sorted.sort_by(f64::total_cmp);
    thresholds
        .iter()
        .map(|&t| {
            let below = sorted.partition_point(|&c| c < t as f64);
            (t, sorted.len() - below)
        })
        .collect()
}

/// `frequency ≈ amplitude × (rank + shift)^(−exponent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZipfFit {
    pub amplitude: f64,
    pub shift: f64,
    pub exponent: f64,
    /// Sum of squared errors between log frequencies and the fitted curve.
    pub residual: f64,
}

impl ZipfFit {
    pub fn predict(&self, rank: f64) -> f64 {
        self.amplitude * (rank + self.shift).powf(-self.exponent)
    }
}

const ZIPF_MAX_ITERATIONS: usize = 10_000;
const ZIPF_TOLERANCE: f64 = 1e-12;

/// Least-squares fit of the Zipf-Mandelbrot law in log-log space.
///
/// Block coordinate descent: for a fixed shift the optimal log-amplitude and
/// exponent have a closed form (ordinary least squares on
/// `ln f = ln A − e·ln(r + s)`), so the shift is searched by golden-section
/// over `s ≥ 0` on the profiled residual.
pub fn fit_zipf_mandelbrot(entries: &[RankEntry]) -> Result<ZipfFit> {
    let points: Vec<(f64, f64)> = entries
        .iter()
        .filter(|e| e.normalized_frequency > 0.0)
        .map(|e| (e.rank as f64, e.normalized_frequency.ln()))
        .collect();
    if points.len() < 3 {
        return Err(Error::TooFewEntries {
            needed: 3,
            got: points.len(),
        });
    }

    let profile = |shift: f64| profile_fit(&points, shift);

    // Coarse geometric scan to bracket the best shift.
    let mut grid = vec![0.0];
    let mut s = 1.0 / 64.0;
    while s <= 65536.0 {
        grid.push(s);
        s *= 2.0;
    }
    let residuals: Vec<f64> = grid.iter().map(|&s| profile(s).2).collect();
    let best = (0..grid.len())
        .min_by(|&a, &b| residuals[a].total_cmp(&residuals[b]))
        .expect("grid is nonempty");
    let mut lo = if best == 0 { 0.0 } else { grid[best - 1] };
    let mut hi = if best + 1 < grid.len() {
        grid[best + 1]
    } else {
        grid[best]
    };

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = profile(c).2;
    let mut fd = profile(d).2;
    for _ in 0..ZIPF_MAX_ITERATIONS {
        if hi - lo < ZIPF_TOLERANCE * (1.0 + hi) {
            break;
        }
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = profile(c).2;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = profile(d).2;
        }
    }

    let mut shift = if fc <= fd { c } else { d };
    if profile(0.0).2 <= profile(shift).2 {
        shift = 0.0;
    }
    let (log_amplitude, exponent, residual) = profile(shift);
    Ok(ZipfFit {
        amplitude: log_amplitude.exp(),
        shift,
        exponent,
        residual: residual.max(0.0),
    })
}

/// Closed-form `(ln A, exponent, residual)` for a fixed shift.
fn profile_fit(points: &[(f64, f64)], shift: f64) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(r, _)| (r + shift).ln()).collect();
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = points.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, (_, y)) in xs.iter().zip(points) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = mean_y - slope * mean_x;
    let residual = xs
        .iter()
        .zip(points)
        .map(|(x, (_, y))| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    (intercept, -slope, residual)
}

/// Reads one JSON record per line. Blank lines are skipped; errors carry the
/// 1-based line number.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<PatientRecord>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PatientRecord = serde_json::from_str(&line).map_err(|e| Error::Format {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::Format {
            line: 0,
            message: "input contains no records".into(),
        });
    }
    Ok(records)
}

pub fn write_jsonl<W: Write>(mut out: W, records: &[PatientRecord]) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, record).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// `rank  token  count  normalized_frequency` with a header row.
pub fn write_rank_tsv<W: Write>(mut out: W, entries: &[RankEntry]) -> Result<()> {
    writeln!(out, "rank\ttoken\tcount\tnormalized_frequency")?;
    for e in entries {
        writeln!(
            out,
            "{}\t{}\t{}\t{:e}",
            e.rank, e.token, e.count, e.normalized_frequency
        )?;
    }
    Ok(())
}

pub fn write_occurrence_tsv<W: Write>(mut out: W, table: &BTreeMap<u64, usize>) -> Result<()> {
    writeln!(out, "min_occurrences\ttokens")?;
    for (threshold, count) in table {
        writeln!(out, "{threshold}\t{count}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus_of(texts: &[(&str, i64, &str)]) -> Corpus {
        build_corpus(
            texts
                .iter()
                .map(|(id, g, t)| PatientRecord::new(*id, *g, vec![t.to_string()]))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("big red balloon"), ["BIG", "RED", "BALLOON"]);
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("self-harm risk; PT_eval."),
            ["SELFHARM", "RISK", "PTEVAL"]
        );
    }

    #[test]
    fn tokenize_keeps_digits_and_drops_unicode() {
        assert_eq!(tokenize("Take 20mg x2"), ["TAKE", "20MG", "X2"]);
        assert_eq!(tokenize("café naïve—ok"), ["CAF", "NA", "VE", "OK"]);
        assert_eq!(tokenize("don't"), ["DON", "T"]);
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let err = build_corpus(vec![
            PatientRecord::new("p1", 1, vec![]),
            PatientRecord::new("p1", 2, vec![]),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateId(id) if id == "p1"));
    }

    #[test]
    fn totals_are_additive() {
        let c = corpus_of(&[("a", 1, "the cat the"), ("b", 2, "the dog")]);
        assert_eq!(c.totals()["THE"], 3.0);
        assert_eq!(c.count(0, "THE") + c.count(1, "THE"), c.totals()["THE"]);
        assert_eq!(c.vocabulary_size(), 3);
    }

    #[test]
    fn empty_notes_contribute_nothing() {
        let c = build_corpus(vec![
            PatientRecord::new("a", 1, vec!["x y".into()]),
            PatientRecord::new("b", 1, vec![]),
        ])
        .unwrap();
        assert_eq!(c.total_count(), 2.0);
        assert!(c.record_counts(1).is_empty());
    }

    #[test]
    fn ranks_break_ties_lexicographically() {
        let c = corpus_of(&[("a", 1, "c c c b b b a a a a a")]);
        let ranks = rank_distribution(&c).unwrap();
        let order: Vec<_> = ranks.iter().map(|e| (e.token.as_str(), e.rank)).collect();
        assert_eq!(order, [("A", 1), ("B", 2), ("C", 3)]);
        let sum: f64 = ranks.iter().map(|e| e.normalized_frequency).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_token_has_rank_one() {
        let c = corpus_of(&[("a", 1, "only")]);
        let ranks = rank_distribution(&c).unwrap();
        assert_eq!(ranks.len(), 1);
        assert_eq!(ranks[0].rank, 1);
        assert_eq!(ranks[0].normalized_frequency, 1.0);
    }

    #[test]
    fn empty_corpus_has_no_ranks() {
        let c = build_corpus(vec![PatientRecord::new("a", 1, vec![])]).unwrap();
        assert!(matches!(rank_distribution(&c), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn occurrence_table() {
        let c = corpus_of(&[("a", 1, "a a a a a b")]);
        let table = word_occurrence_table(&c, &[1, 2]);
        assert_eq!(table[&1], 2);
        assert_eq!(table[&2], 1);
    }

    #[test]
    fn zipf_needs_three_points() {
        let entries: Vec<RankEntry> = (1..=2)
            .map(|r| RankEntry {
                token: format!("T{r}"),
                count: 1.0,
                rank: r,
                normalized_frequency: 0.5,
            })
            .collect();
        assert!(matches!(
            fit_zipf_mandelbrot(&entries),
            Err(Error::TooFewEntries { got: 2, .. })
        ));
    }

    #[test]
    fn jsonl_reports_line_numbers() {
        let input = "{\"id\":\"a\",\"group\":1,\"notes\":[\"x\"]}\n\nnot json\n";
        let err = read_jsonl(input.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format { line: 3, .. }));
        assert!(read_jsonl("".as_bytes()).is_err());
    }
}
