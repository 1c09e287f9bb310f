//! Synthetic cohorts: Zipfian background text with planted terms whose
//! per-note rates differ between the groups.

use std::collections::BTreeSet;
use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::PatientRecord;
use crate::error::{Error, Result};

/// A token planted into a note with a group-dependent probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTerm {
    pub token: String,
    pub rate_pos: f64,
    pub rate_neg: f64,
}

/// Two tokens planted next to each other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPair {
    pub tokens: (String, String),
    pub rate_pos: f64,
    pub rate_neg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub patients_pos: usize,
    pub patients_neg: usize,
    /// Inclusive range.
    pub notes_per_patient: (usize, usize),
    /// Inclusive range of background words per note.
    pub words_per_note: (usize, usize),
    pub background_vocab: usize,
    pub zipf_shift: f64,
    pub zipf_exponent: f64,
    pub planted_terms: Vec<PlantedTerm>,
    pub planted_pairs: Vec<PlantedPair>,
    pub positive_label: i64,
    pub negative_label: i64,
    pub seed: u64,
}

/// Planted vocabulary for the presets.
pub const PLANTED_WORDS: [&str; 6] = [
    "DESPONDENT",
    "WORTHLESSNESS",
    "TURMOIL",
    "FRIGHTENING",
    "NOBODY",
    "UNHAPPY",
];

fn planted(rate_pos: f64, rate_neg: f64) -> Vec<PlantedTerm> {
    PLANTED_WORDS
        .iter()
        .map(|w| PlantedTerm {
            token: (*w).to_owned(),
            rate_pos,
            rate_neg,
        })
        .collect()
}

impl SynthSpec {
    /// 70 and 69 patients, 27 to 77 notes of about 82 words, 25,000
    /// background words; nothing planted.
    pub fn paper_scale(seed: u64) -> Self {
        SynthSpec {
            patients_pos: 70,
            patients_neg: 69,
            notes_per_patient: (27, 77),
            words_per_note: (62, 102),
            background_vocab: 25_000,
            zipf_shift: 7.0,
            zipf_exponent: 1.0,
            planted_terms: Vec::new(),
            planted_pairs: Vec::new(),
            positive_label: 2,
            negative_label: 3,
            seed,
        }
    }

    /// Paper scale with six terms at rate 0.6 per note in the positive group
    /// and 0.05 in the negative group.
    pub fn strong_signal(seed: u64) -> Self {
        SynthSpec {
            planted_terms: planted(0.6, 0.05),
            ..SynthSpec::paper_scale(seed)
        }
    }

    /// Paper scale with the six terms at equal rates in both groups.
    pub fn null_signal(seed: u64) -> Self {
        SynthSpec {
            planted_terms: planted(0.3, 0.3),
            ..SynthSpec::paper_scale(seed)
        }
    }

    /// Paper scale with six weakly discriminative terms, so single
    /// representations are noticeably imperfect.
    pub fn weak_signal(seed: u64) -> Self {
        SynthSpec {
            planted_terms: planted(0.022, 0.012),
            ..SynthSpec::paper_scale(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.background_vocab == 0 {
            return bad("background vocabulary must be nonempty");
        }
        if self.patients_pos == 0 || self.patients_neg == 0 {
            return bad("both groups need patients");
        }
        if self.positive_label == self.negative_label {
            return bad("group labels must differ");
        }
        let (a, b) = self.notes_per_patient;
        let (c, d) = self.words_per_note;
        if a > b || c > d || b == 0 {
            return bad("empty note or word range");
        }
        if self.zipf_shift.is_nan() || self.zipf_shift <= -1.0 || !self.zipf_exponent.is_finite() {
            return bad("zipf shift must exceed -1 and the exponent be finite");
        }
        let rates = self
            .planted_terms
            .iter()
            .flat_map(|t| [t.rate_pos, t.rate_neg])
            .chain(
                self.planted_pairs
                    .iter()
                    .flat_map(|p| [p.rate_pos, p.rate_neg]),
            );
        for r in rates {
            if !(0.0..=1.0).contains(&r) {
                return bad("planted rates are per-note probabilities in [0, 1]");
            }
        }
        let background: BTreeSet<String> =
            (0..self.background_vocab).map(background_word).collect();
        let planted_tokens = self.planted_terms.iter().map(|t| &t.token).chain(
            self.planted_pairs
                .iter()
                .flat_map(|p| [&p.tokens.0, &p.tokens.1]),
        );
        for t in planted_tokens {
            if background.contains(t) {
                return Err(Error::Config(format!(
                    "planted token {t} is also a background word"
                )));
            }
        }
        Ok(())
    }
}

/// Generated records plus what was planted.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub records: Vec<PatientRecord>,
    pub spec: SynthSpec,
}

const CONSONANTS: &[u8] = b"BCDFGHJKLMNPRSTVWZ";
const VOWELS: &[u8] = b"AEIOU";

/// Pronounceable pseudo-word for background rank `index + 1`. Every
/// such word ends in a vowel.
pub fn background_word(index: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut n = index;
    let mut syllables = Vec::new();
    loop {
        let s = n % base;
        syllables.push([CONSONANTS[s / VOWELS.len()], VOWELS[s % VOWELS.len()]]);
        n /= base;
        if n == 0 {
            break;
        }
        n -= 1;
    }
    syllables.reverse();
    syllables.concat().into_iter().map(char::from).collect()
}

/// Probability of background rank `r` (1-based) under the spec's
/// Zipf-Mandelbrot law, normalized over the vocabulary.
pub fn background_probabilities(spec: &SynthSpec) -> Vec<f64> {
    let w: Vec<f64> = (1..=spec.background_vocab)
        .map(|r| (r as f64 + spec.zipf_shift).powf(-spec.zipf_exponent))
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Generates positive patients first, then negative. Patient `i` draws from
/// its own ChaCha stream `i` under the spec's seed.
pub fn generate(spec: &SynthSpec) -> Result<Synthetic> {
    spec.validate()?;
    let words: Vec<String> = (0..spec.background_vocab).map(background_word).collect();
    let dist = WeightedIndex::new(background_probabilities(spec))
        .map_err(|e| Error::Config(e.to_string()))?;
    let n = spec.patients_pos + spec.patients_neg;
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let positive = i < spec.patients_pos;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let n_notes = rng.gen_range(spec.notes_per_patient.0..=spec.notes_per_patient.1);
        let mut notes = Vec::with_capacity(n_notes);
        for _ in 0..n_notes {
            let len = rng.gen_range(spec.words_per_note.0..=spec.words_per_note.1);
            let mut note: Vec<&str> = (0..len)
                .map(|_| words[dist.sample(&mut rng)].as_str())
                .collect();
            for t in &spec.planted_terms {
                let rate = if positive { t.rate_pos } else { t.rate_neg };
                if rng.gen_bool(rate) {
                    let at = rng.gen_range(0..=note.len());
                    note.insert(at, &t.token);
                }
            }
            for p in &spec.planted_pairs {
                let rate = if positive { p.rate_pos } else { p.rate_neg };
                if rng.gen_bool(rate) {
                    let at = rng.gen_range(0..=note.len());
                    note.insert(at, &p.tokens.1);
                    note.insert(at, &p.tokens.0);
                }
            }
            notes.push(note.join(" "));
        }
        let group = if positive {
            spec.positive_label
        } else {
            spec.negative_label
        };
        records.push(PatientRecord::new(format!("P{i:04}"), group, notes));
    }
    Ok(Synthetic {
        records,
        spec: spec.clone(),
    })
}

/// `term  kind  rate_pos  rate_neg`, one row per planted term or pair.
pub fn write_ground_truth_tsv<W: Write>(mut out: W, spec: &SynthSpec) -> Result<()> {
    writeln!(out, "term\tkind\trate_pos\trate_neg")?;
    for t in &spec.planted_terms {
        writeln!(out, "{}\tterm\t{}\t{}", t.token, t.rate_pos, t.rate_neg)?;
    }
    for p in &spec.planted_pairs {
        writeln!(
            out,
            "{}_{}\tpair\t{}\t{}",
            p.tokens.0, p.tokens.1, p.rate_pos, p.rate_neg
        )?;
    }
    Ok(())
}
