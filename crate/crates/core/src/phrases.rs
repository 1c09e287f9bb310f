//! Word pairs and skip-grams, pair mutual information, and n-gram cuts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An ordered tuple of one to four tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NGram {
    words: Vec<String>,
}

impl NGram {
    pub fn new<S: Into<String>>(words: impl IntoIterator<Item = S>) -> Self {
        let words: Vec<String> = words.into_iter().map(Into::into).collect();
        debug_assert!((1..=4).contains(&words.len()));
        NGram { words }
    }

    pub fn unigram(word: impl Into<String>) -> Self {
        NGram {
            words: vec![word.into()],
        }
    }

    /// Inverse of `Display`: components are separated by `_`.
    pub fn parse(joined: &str) -> Self {
        NGram::new(joined.split('_'))
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn arity(&self) -> usize {
        self.words.len()
    }

    fn from_indices<S: AsRef<str>>(tokens: &[S], indices: &[usize]) -> Self {
        NGram {
            words: indices
                .iter()
                .map(|&i| tokens[i].as_ref().to_owned())
                .collect(),
        }
    }
}

impl fmt::Display for NGram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, w) in self.words.iter().enumerate() {
            if i > 0 {
                f.write_str("_")?;
            }
            f.write_str(w)?;
        }
        Ok(())
    }
}

/// Adjacent pairs plus pairs one word apart, by starting position.
///
/// A sequence of length `n ≥ 2` yields `2n − 3` pairs.
pub fn generate_pairs<S: AsRef<str>>(tokens: &[S]) -> Vec<NGram> {
    let n = tokens.len();
    let mut out = Vec::with_capacity((2 * n).saturating_sub(3));
    for i in 0..n {
        if i + 1 < n {
            out.push(NGram::from_indices(tokens, &[i, i + 1]));
        }
        if i + 2 < n {
            out.push(NGram::from_indices(tokens, &[i, i + 2]));
        }
    }
    out
}

/// Every order-preserving choice of `size` words from each window of
/// `size + 1` consecutive tokens. A sequence of exactly `size` tokens yields
/// itself once.
fn windowed_skip_grams<S: AsRef<str>>(tokens: &[S], size: usize) -> Vec<NGram> {
    let n = tokens.len();
    if n < size {
        return Vec::new();
    }
    if n == size {
        let all: Vec<usize> = (0..n).collect();
        return vec![NGram::from_indices(tokens, &all)];
    }
    let window = size + 1;
    let mut out = Vec::with_capacity((n - window + 1) * window);
    let mut picked = Vec::with_capacity(size);
    for start in 0..=n - window {
        // Dropping each position of the window in turn enumerates the
        // C(size+1, size) selections in lexicographic order, last-dropped first.
        for dropped in (0..window).rev() {
            picked.clear();
            picked.extend((0..window).filter(|&j| j != dropped).map(|j| start + j));
            out.push(NGram::from_indices(tokens, &picked));
        }
    }
    out
}

/// Trigrams: all 4 ways of choosing three words from each run of four.
pub fn generate_trigrams<S: AsRef<str>>(tokens: &[S]) -> Vec<NGram> {
    windowed_skip_grams(tokens, 3)
}

/// 4-grams: all 5 ways of choosing four words from each run of five.
pub fn generate_fourgrams<S: AsRef<str>>(tokens: &[S]) -> Vec<NGram> {
    windowed_skip_grams(tokens, 4)
}

/// Bag of n-grams of every arity `1..=arity` over the notes of one record.
/// Grams never span two notes.
pub fn term_counts(notes: &[Vec<String>], arity: usize) -> BTreeMap<NGram, f64> {
    let mut counts: BTreeMap<NGram, f64> = BTreeMap::new();
    for note in notes {
        for w in note {
            *counts.entry(NGram::unigram(w.as_str())).or_default() += 1.0;
        }
        let mut add = |grams: Vec<NGram>| {
            for g in grams {
                *counts.entry(g).or_default() += 1.0;
            }
        };
        if arity >= 2 {
            add(generate_pairs(note));
        }
        if arity >= 3 {
            add(generate_trigrams(note));
        }
        if arity >= 4 {
            add(generate_fourgrams(note));
        }
    }
    counts
}

/// Pair counts and their left/right marginals over a pooled multiset of
/// adjacent and skip-one pairs.
#[derive(Debug, Clone, Default)]
pub struct PairStats {
    pair_count: HashMap<NGram, f64>,
    left_marginal: HashMap<String, f64>,
    right_marginal: HashMap<String, f64>,
    total_pairs: f64,
}

impl PairStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, pair: &NGram, count: f64) {
        debug_assert_eq!(pair.arity(), 2);
        *self.pair_count.entry(pair.clone()).or_default() += count;
        *self.left_marginal.entry(pair.words[0].clone()).or_default() += count;
        *self
            .right_marginal
            .entry(pair.words[1].clone())
            .or_default() += count;
        self.total_pairs += count;
    }

    /// Pairs from every note, never crossing a note boundary.
    pub fn from_notes<'a>(notes: impl IntoIterator<Item = &'a Vec<String>>) -> Self {
        let mut stats = PairStats::new();
        for note in notes {
            for pair in generate_pairs(note) {
                stats.add(&pair, 1.0);
            }
        }
        stats
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a NGram>) -> Self {
        let mut stats = PairStats::new();
        for pair in pairs {
            stats.add(pair, 1.0);
        }
        stats
    }

    /// Every count multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let scale =
            |m: &HashMap<String, f64>| m.iter().map(|(k, v)| (k.clone(), v * factor)).collect();
        PairStats {
            pair_count: self
                .pair_count
                .iter()
                .map(|(k, v)| (k.clone(), v * factor))
                .collect(),
            left_marginal: scale(&self.left_marginal),
            right_marginal: scale(&self.right_marginal),
            total_pairs: self.total_pairs * factor,
        }
    }

    pub fn count(&self, pair: &NGram) -> f64 {
        self.pair_count.get(pair).copied().unwrap_or(0.0)
    }

    pub fn left_marginal(&self, word: &str) -> f64 {
        self.left_marginal.get(word).copied().unwrap_or(0.0)
    }

    pub fn right_marginal(&self, word: &str) -> f64 {
        self.right_marginal.get(word).copied().unwrap_or(0.0)
    }

    pub fn total_pairs(&self) -> f64 {
        self.total_pairs
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&NGram, f64)> {
        self.pair_count.iter().map(|(k, v)| (k, *v))
    }

    pub fn len(&self) -> usize {
        self.pair_count.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pair_count.is_empty()
    }
}

/// Pointwise mutual information `log2(p(x,y) / (p(x,*) p(*,y)))`.
///
/// Positive for pairs that co-occur more often than chance; collocations
/// score high.
pub fn pair_mi(stats: &PairStats, pair: &NGram) -> Result<f64> {
    let joint = stats.count(pair);
    let left = stats.left_marginal(&pair.words[0]);
    let right = stats.right_marginal(&pair.words[1]);
    if joint <= 0.0 || left <= 0.0 || right <= 0.0 {
        return Err(Error::ZeroMarginal(pair.to_string()));
    }
    Ok((joint * stats.total_pairs / (left * right)).log2())
}

/// All pairs ranked by descending MI, ties by pair order.
pub fn rank_pairs_by_mi(stats: &PairStats) -> Vec<(NGram, f64)> {
    let mut ranked: Vec<(NGram, f64)> = stats
        .pairs()
        .map(|(p, _)| (p.clone(), pair_mi(stats, p).expect("observed pair")))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

/// Frequency, MI and significant-word cuts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CutSpec {
    /// Words occurring this many times or fewer are dropped.
    pub min_word_count: u64,
    /// N-grams occurring this many times or fewer are dropped.
    pub min_ngram_count: u64,
    /// Pairs must have MI strictly above this.
    pub min_mi: Option<f64>,
    /// N-grams of arity ≥ 2 must contain at least one of these words.
    pub significant_words: Option<BTreeSet<String>>,
}

/// N-grams surviving `spec`.
///
/// Single words are only subject to the frequency cuts; MI applies to pairs;
/// significant-word membership applies to every arity above one.
pub fn apply_cuts(
    ngrams: &BTreeMap<NGram, f64>,
    word_totals: &BTreeMap<String, f64>,
    stats: &PairStats,
    spec: &CutSpec,
) -> BTreeSet<NGram> {
    ngrams
        .iter()
        .filter(|(gram, &count)| retained(gram, count, word_totals, stats, spec))
        .map(|(gram, _)| gram.clone())
        .collect()
}

fn retained(
    gram: &NGram,
    count: f64,
    word_totals: &BTreeMap<String, f64>,
    stats: &PairStats,
    spec: &CutSpec,
) -> bool {
    if count <= spec.min_ngram_count as f64 {
        return false;
    }
    if gram.arity() == 1 {
        let word_count = word_totals.get(&gram.words[0]).copied().unwrap_or(count);
        return word_count > spec.min_word_count as f64;
    }
    if gram.arity() == 2 {
        if let Some(min_mi) = spec.min_mi {
            match pair_mi(stats, gram) {
                Ok(mi) if mi > min_mi => {}
                _ => return false,
            }
        }
    }
    if let Some(words) = &spec.significant_words {
        if !gram.words.iter().any(|w| words.contains(w)) {
            return false;
        }
    }
    true
}

/// `ngram  arity  count  mi` rows; MI is blank for anything but pairs.
pub fn write_ngram_tsv<W: Write>(
    mut out: W,
    ngrams: &BTreeMap<NGram, f64>,
    stats: &PairStats,
) -> Result<()> {
    writeln!(out, "ngram\tarity\tcount\tmi")?;
    for (gram, count) in ngrams {
        let mi = if gram.arity() == 2 {
            pair_mi(stats, gram)
                .map(|m| format!("{m:.6}"))
                .unwrap_or_default()
        } else {
            String::new()
        };
        writeln!(out, "{gram}\t{}\t{count}\t{mi}", gram.arity())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn names(grams: &[NGram]) -> Vec<String> {
        let mut v: Vec<String> = grams.iter().map(|g| g.words.concat()).collect();
        v.sort();
        v
    }

    #[test]
    fn big_red_balloon() {
        let pairs = generate_pairs(&toks("BIG RED BALLOON"));
        let mut shown: Vec<String> = pairs.iter().map(ToString::to_string).collect();
        shown.sort();
        assert_eq!(shown, ["BIG_BALLOON", "BIG_RED", "RED_BALLOON"]);
    }

    #[test]
    fn pair_counts() {
        assert!(generate_pairs(&toks("A")).is_empty());
        assert_eq!(names(&generate_pairs(&toks("A B"))), ["AB"]);
        assert_eq!(
            names(&generate_pairs(&toks("A B C D"))),
            ["AB", "AC", "BC", "BD", "CD"]
        );
    }

    #[test]
    fn trigram_windows() {
        assert_eq!(names(&generate_trigrams(&toks("A B C"))), ["ABC"]);
        assert_eq!(
            names(&generate_trigrams(&toks("A B C D"))),
            ["ABC", "ABD", "ACD", "BCD"]
        );
        let five = names(&generate_trigrams(&toks("A B C D E")));
        assert_eq!(five.len(), 8);
        assert_eq!(five.iter().filter(|g| *g == "BCD").count(), 2);
        assert_eq!(five.iter().filter(|g| *g == "ABD").count(), 1);
        assert!(generate_trigrams(&toks("A B")).is_empty());
    }

    #[test]
    fn fourgram_windows() {
        assert_eq!(names(&generate_fourgrams(&toks("A B C D"))), ["ABCD"]);
        assert_eq!(
            names(&generate_fourgrams(&toks("A B C D E"))),
            ["ABCD", "ABCE", "ABDE", "ACDE", "BCDE"]
        );
        assert_eq!(generate_fourgrams(&toks("A B C D E F")).len(), 10);
    }

    #[test]
    fn term_counts_include_lower_arities_and_respect_notes() {
        let notes = vec![toks("A B"), toks("C")];
        let counts = term_counts(&notes, 2);
        assert_eq!(counts[&NGram::unigram("A")], 1.0);
        assert_eq!(counts[&NGram::new(["A", "B"])], 1.0);
        assert!(!counts.contains_key(&NGram::new(["B", "C"])));
        assert_eq!(counts.len(), 4);
    }

    #[test]
    fn single_pair_has_zero_mi() {
        let stats = PairStats::from_pairs(&[NGram::new(["X", "Y"])]);
        assert_eq!(pair_mi(&stats, &NGram::new(["X", "Y"])).unwrap(), 0.0);
    }

    #[test]
    fn four_pair_mi() {
        let xy = NGram::new(["X", "Y"]);
        let pairs = [
            xy.clone(),
            xy.clone(),
            NGram::new(["X", "Z"]),
            NGram::new(["W", "Y"]),
        ];
        let stats = PairStats::from_pairs(&pairs);
        let mi = pair_mi(&stats, &xy).unwrap();
        assert!((mi - (8.0f64 / 9.0).log2()).abs() < 1e-12);
        assert!((mi + 0.170).abs() < 1e-3);
    }

    #[test]
    fn unseen_pair_is_an_error() {
        let stats = PairStats::from_pairs(&[NGram::new(["X", "Y"])]);
        assert!(pair_mi(&stats, &NGram::new(["Y", "X"])).is_err());
    }

    #[test]
    fn cuts() {
        let ab = NGram::new(["A", "B"]);
        let cd = NGram::new(["C", "D"]);
        let mut grams = BTreeMap::new();
        grams.insert(ab.clone(), 4.0);
        grams.insert(cd.clone(), 9.0);
        grams.insert(NGram::unigram("A"), 9.0);
        let words: BTreeMap<String, f64> = [("A".to_string(), 9.0)].into_iter().collect();
        let stats = PairStats::from_pairs(&[ab.clone(), cd.clone()]);

        let identity = apply_cuts(&grams, &words, &stats, &CutSpec::default());
        assert_eq!(identity.len(), 3);

        let freq = CutSpec {
            min_ngram_count: 4,
            ..CutSpec::default()
        };
        let kept = apply_cuts(&grams, &words, &stats, &freq);
        assert!(!kept.contains(&ab));
        assert!(kept.contains(&cd));

        let member = CutSpec {
            significant_words: Some(["B".to_string()].into_iter().collect()),
            ..CutSpec::default()
        };
        let kept = apply_cuts(&grams, &words, &stats, &member);
        assert!(kept.contains(&ab));
        assert!(!kept.contains(&cd));
        assert!(kept.contains(&NGram::unigram("A")));
    }
}
