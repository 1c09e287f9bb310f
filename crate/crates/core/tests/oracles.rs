//! Independent oracles: brute-force enumeration, direct recounts and exact
//! rational arithmetic checked against the library.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use proptest::prelude::*;

use cohortsift::corpus::{build_corpus, rank_distribution, word_occurrence_table, PatientRecord};
use cohortsift::ensemble::{model_confusion, vote_histogram, Model};
use cohortsift::evaluation::{metrics_from_confusion, ConfusionMatrix};
use cohortsift::evolearner::{dynamic_select, score_tree, ProgramTree, Representation};
use cohortsift::features::{class_mi, select_static, FeatureMatrix};
use cohortsift::phrases::{
    generate_fourgrams, generate_pairs, generate_trigrams, pair_mi, rank_pairs_by_mi, NGram,
    PairStats,
};

fn names(grams: &[NGram]) -> Vec<String> {
    let mut v: Vec<String> = grams.iter().map(|g| g.to_string()).collect();
    v.sort();
    v
}

/// Every order-preserving choice of `n` from each window of `n + 1`
/// consecutive tokens, by bitmask; a sequence of exactly `n` yields itself.
fn window_oracle(tokens: &[String], n: usize) -> Vec<String> {
    let mut out = Vec::new();
    if tokens.len() == n {
        out.push(tokens.join("_"));
    }
    if tokens.len() > n {
        for start in 0..=tokens.len() - (n + 1) {
            let window = &tokens[start..start + n + 1];
            for mask in 0u32..(1 << (n + 1)) {
                if mask.count_ones() as usize == n {
                    let pick: Vec<&str> = (0..=n)
                        .filter(|i| mask & (1 << i) != 0)
                        .map(|i| window[i].as_str())
                        .collect();
                    out.push(pick.join("_"));
                }
            }
        }
    }
    out.sort();
    out
}

fn pair_oracle(tokens: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for i in 0..tokens.len() {
        for d in 1..=2 {
            if i + d < tokens.len() {
                out.push(format!("{}_{}", tokens[i], tokens[i + d]));
            }
        }
    }
    out.sort();
    out
}

fn tokens_strategy(max_len: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(
        prop::sample::select(vec!["A", "B", "C", "D", "E"]),
        0..=max_len,
    )
    .prop_map(|v| v.into_iter().map(str::to_owned).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn ngram_windows_match_enumeration(tokens in tokens_strategy(12)) {
        prop_assert_eq!(names(&generate_pairs(&tokens)), pair_oracle(&tokens));
        prop_assert_eq!(names(&generate_trigrams(&tokens)), window_oracle(&tokens, 3));
        prop_assert_eq!(names(&generate_fourgrams(&tokens)), window_oracle(&tokens, 4));
        if tokens.len() >= 2 {
            prop_assert_eq!(generate_pairs(&tokens).len(), 2 * tokens.len() - 3);
        }
    }

    #[test]
    fn pair_mi_matches_contingency(notes in prop::collection::vec(tokens_strategy(10), 1..10), scale in 1u32..50) {
        let stats = PairStats::from_notes(notes.iter());
        prop_assume!(!stats.is_empty());
        let mut joint: BTreeMap<(String, String), f64> = BTreeMap::new();
        for note in &notes {
            for p in pair_oracle(note) {
                let (x, y) = p.split_once('_').unwrap();
                *joint.entry((x.into(), y.into())).or_default() += 1.0;
            }
        }
        let total: f64 = joint.values().sum();
        let scaled = stats.scaled(scale as f64);
        for ((x, y), c) in &joint {
            let left: f64 = joint.iter().filter(|((a, _), _)| a == x).map(|(_, v)| v).sum();
            let right: f64 = joint.iter().filter(|((_, b), _)| b == y).map(|(_, v)| v).sum();
            let expected = ((c / total) / ((left / total) * (right / total))).log2();
            let pair = NGram::new([x.as_str(), y.as_str()]);
            let got = pair_mi(&stats, &pair).unwrap();
            prop_assert!((got - expected).abs() <= 1e-12, "{} vs {}", got, expected);
            prop_assert!((pair_mi(&scaled, &pair).unwrap() - got).abs() <= 1e-12);
        }
        let ranked = rank_pairs_by_mi(&stats);
        prop_assert_eq!(ranked.len(), joint.len());
        prop_assert!(ranked.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn class_mi_matches_probability_table(
        rows in prop::collection::vec((any::<bool>(), any::<bool>()), 1..40)
    ) {
        let column: Vec<bool> = rows.iter().map(|r| r.0).collect();
        let labels: Vec<bool> = rows.iter().map(|r| r.1).collect();
        let n = rows.len() as f64;
        let mut best = f64::NEG_INFINITY;
        for g in [true, false] {
            for v in [true, false] {
                let joint = rows.iter().filter(|r| r.1 == g && r.0 == v).count() as f64 / n;
                if joint == 0.0 {
                    continue;
                }
                let pg = labels.iter().filter(|&&l| l == g).count() as f64 / n;
                let pv = column.iter().filter(|&&c| c == v).count() as f64 / n;
                best = best.max((joint / (pg * pv)).log2());
            }
        }
        let got = class_mi(&column, &labels);
        prop_assert!((got - best).abs() <= 1e-12, "{} vs {}", got, best);
        // Complementing the column and swapping label names is a symmetry.
        let cc: Vec<bool> = column.iter().map(|c| !c).collect();
        let ll: Vec<bool> = labels.iter().map(|l| !l).collect();
        prop_assert!((class_mi(&cc, &ll) - got).abs() <= 1e-12);
    }

    #[test]
    fn static_selection_matches_exhaustive_sort(
        bits in prop::collection::vec(prop::collection::vec(any::<bool>(), 50), 12..30),
        n in 1usize..60,
    ) {
        let targets: Vec<bool> = (0..bits.len()).map(|i| i % 2 == 0).collect();
        let m = FeatureMatrix::from_bool_rows(&bits, &targets);
        let mut scored: Vec<(f64, usize, usize)> = (0..50)
            .map(|j| {
                let col: Vec<bool> = bits.iter().map(|r| r[j]).collect();
                let mi = class_mi(&col, &targets);
                // Winning-cell support, recomputed: the largest joint count
                // among cells reaching the maximum.
                let support = [(true, true), (true, false), (false, true), (false, false)]
                    .iter()
                    .filter_map(|&(g, v)| {
                        let joint = col.iter().zip(&targets).filter(|(c, t)| **c == v && **t == g).count();
                        let pg = targets.iter().filter(|&&t| t == g).count();
                        let pv = col.iter().filter(|&&c| c == v).count();
                        (joint > 0 && (((joint * bits.len()) as f64) / ((pg * pv) as f64)).log2() == mi).then_some(joint)
                    })
                    .max()
                    .unwrap_or(0);
                (mi, if mi > 0.0 { support } else { 0 }, j)
            })
            .collect();
        // Feature names F0..F49 sort as strings, not numbers.
        scored.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(b.1.cmp(&a.1))
                .then_with(|| format!("F{}", a.2).cmp(&format!("F{}", b.2)))
        });
        let expected: Vec<String> = scored.iter().take(n.min(50)).map(|s| format!("$F{}_t1.0", s.2)).collect();
        let got: Vec<String> = select_static(&m, n).features().iter().map(|f| f.to_string()).collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn metrics_match_rationals_on_random_large_counts(
        tp in 0u64..5000, fp in 0u64..5000, fn_ in 0u64..5000, tn in 0u64..5000,
    ) {
        prop_assume!(tp + fp + fn_ + tn > 0);
        check_metrics(tp, fp, fn_, tn);
    }

    #[test]
    fn score_matches_row_recount(
        bits in prop::collection::vec(prop::collection::vec(any::<bool>(), 8), 20),
        targets in prop::collection::vec(any::<bool>(), 20),
        tree in tree_strategy(8),
    ) {
        let m = FeatureMatrix::from_bool_rows(&bits, &targets);
        let correct = bits
            .iter()
            .zip(&targets)
            .filter(|(row, t)| tree.evaluate(row).unwrap() == **t)
            .count();
        prop_assert_eq!(score_tree(&tree, &m).unwrap(), correct as f64 / 20.0);
    }

    #[test]
    fn dynamic_selection_matches_exhaustive_ranking(
        bits in prop::collection::vec(prop::collection::vec(any::<bool>(), 30), 24),
        targets in prop::collection::vec(any::<bool>(), 24),
        tree in tree_strategy(30),
        k in 1usize..30,
    ) {
        let m = FeatureMatrix::from_bool_rows(&bits, &targets);
        let errors: Vec<bool> = bits
            .iter()
            .zip(&targets)
            .map(|(row, t)| tree.evaluate(row).unwrap() != *t)
            .collect();
        let used = tree.features();
        let mut scored: Vec<(f64, usize, usize)> = (0..30)
            .filter(|j| !used.contains(j))
            .map(|j| {
                let col: Vec<bool> = bits.iter().map(|r| r[j]).collect();
                let mi = class_mi(&col, &errors);
                let support = (0..4)
                    .filter_map(|cell| {
                        let (g, v) = (cell & 1 == 1, cell & 2 == 2);
                        let joint = col.iter().zip(&errors).filter(|(c, e)| **c == v && **e == g).count();
                        let pg = errors.iter().filter(|&&e| e == g).count();
                        let pv = col.iter().filter(|&&c| c == v).count();
                        (joint > 0 && (((joint * 24) as f64) / ((pg * pv) as f64)).log2() == mi).then_some(joint)
                    })
                    .max()
                    .unwrap_or(0);
                (mi, if mi > 0.0 { support } else { 0 }, j)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
        let expected: Vec<usize> = scored.iter().take(k).map(|s| s.2).collect();
        prop_assert_eq!(dynamic_select(&tree, &m, k).unwrap(), expected);
    }

    #[test]
    fn ensemble_counts_match_recount(
        bits in prop::collection::vec(prop::collection::vec(any::<bool>(), 6), 30),
        targets in prop::collection::vec(any::<bool>(), 30),
        trees in prop::collection::vec(tree_strategy(6), 1..12),
        bins in 2usize..12,
    ) {
        let m = FeatureMatrix::from_bool_rows(&bits, &targets);
        let reps: Vec<Representation> = trees
            .iter()
            .map(|t| Representation { tree: t.clone(), train_accuracy: 0.0, seed: 0, evaluations_used: 0 })
            .collect();
        let n = reps.len();
        let model = Model::new(reps, m.features().to_vec(), 1, 0).unwrap();
        let mut cm = ConfusionMatrix::default();
        let mut pos = vec![0usize; bins];
        let mut neg = vec![0usize; bins];
        for (row, &t) in bits.iter().zip(&targets) {
            let votes = trees.iter().filter(|tr| tr.evaluate(row).unwrap()).count();
            let p = Ratio::new(votes, n);
            cm.record(t, p > Ratio::new(1, 2));
            // Smallest b with p < (b+1)/bins, capped at the last bin.
            let b = (0..bins).find(|&b| p < Ratio::new(b + 1, bins)).unwrap_or(bins - 1);
            if t { pos[b] += 1 } else { neg[b] += 1 }
        }
        prop_assert_eq!(model_confusion(&model, &m).unwrap(), cm);
        let h = vote_histogram(&model, &m, bins).unwrap();
        prop_assert_eq!(h.positive, pos);
        prop_assert_eq!(h.negative, neg);
    }

    #[test]
    fn rank_and_occurrence_match_linear_scan(
        notes in prop::collection::vec("[a-e ]{0,30}", 1..8),
    ) {
        let records: Vec<PatientRecord> = notes
            .iter()
            .enumerate()
            .map(|(i, n)| PatientRecord::new(format!("r{i}"), 0, vec![n.clone()]))
            .collect();
        let corpus = build_corpus(records).unwrap();
        let mut totals: BTreeMap<String, u64> = BTreeMap::new();
        for n in &notes {
            for w in n.split_whitespace() {
                *totals.entry(w.to_uppercase()).or_default() += 1;
            }
        }
        prop_assume!(!totals.is_empty());
        let thresholds: Vec<u64> = (1..=6).collect();
        let table = word_occurrence_table(&corpus, &thresholds);
        for &t in &thresholds {
            prop_assert_eq!(table[&t], totals.values().filter(|&&c| c >= t).count());
        }
        let ranks = rank_distribution(&corpus).unwrap();
        let sum: f64 = ranks.iter().map(|e| e.normalized_frequency).sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        let mut expected: Vec<(String, u64)> = totals.into_iter().collect();
        expected.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let got: Vec<(String, u64)> = ranks.iter().map(|e| (e.token.clone(), e.count as u64)).collect();
        prop_assert_eq!(got, expected);
    }
}

fn tree_strategy(width: usize) -> impl Strategy<Value = ProgramTree> {
    let leaf = (0..width, any::<bool>()).prop_map(|(f, n)| ProgramTree::Literal {
        feature: f,
        negated: n,
    });
    leaf.prop_recursive(3, 16, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..4).prop_map(ProgramTree::And),
            prop::collection::vec(inner, 1..4).prop_map(ProgramTree::Or),
        ]
    })
}

fn check_metrics(tp: u64, fp: u64, fn_: u64, tn: u64) {
    let m = metrics_from_confusion(&ConfusionMatrix::new(tp, fp, fn_, tn)).unwrap();
    let r = |num: u64, den: u64| -> Option<Ratio<u64>> { (den != 0).then(|| Ratio::new(num, den)) };
    let to_f = |x: Option<Ratio<u64>>| x.map_or(0.0, |x| *x.numer() as f64 / *x.denom() as f64);
    let accuracy = r(tp + tn, tp + fp + fn_ + tn);
    let precision = r(tp, tp + fp);
    let recall = r(tp, tp + fn_);
    let fp_rate = r(fp, fp + tn);
    let p = precision.unwrap_or_default();
    let q = recall.unwrap_or_default();
    let f1 = (p + q != Ratio::from_integer(0)).then(|| Ratio::from_integer(2) * p * q / (p + q));
    let f2 = (Ratio::from_integer(4) * p + q != Ratio::from_integer(0))
        .then(|| Ratio::from_integer(5) * p * q / (Ratio::from_integer(4) * p + q));
    let degenerate = [precision, recall, fp_rate, f1, f2]
        .iter()
        .any(Option::is_none);
    for (got, want) in [
        (m.accuracy, to_f(accuracy)),
        (m.precision, to_f(precision)),
        (m.recall, to_f(recall)),
        (m.fp_rate, to_f(fp_rate)),
        (m.f1, to_f(f1)),
        (m.f2, to_f(f2)),
    ] {
        assert!(
            (got - want).abs() <= 1e-12,
            "({tp},{fp},{fn_},{tn}): {got} vs {want}"
        );
    }
    assert_eq!(m.degenerate, degenerate, "({tp},{fp},{fn_},{tn})");
}

#[test]
fn metrics_match_rationals_exhaustively() {
    for tp in 0..=20 {
        for fp in 0..=20 {
            for fn_ in 0..=20 {
                for tn in 0..=20 {
                    if tp + fp + fn_ + tn > 0 {
                        check_metrics(tp, fp, fn_, tn);
                    }
                }
            }
        }
    }
}

#[test]
fn big_red_balloon() {
    let t: Vec<String> = ["BIG", "RED", "BALLOON"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    assert_eq!(
        names(&generate_pairs(&t)),
        ["BIG_BALLOON", "BIG_RED", "RED_BALLOON"]
    );
    let six: Vec<String> = "ABCDEF".chars().map(String::from).collect();
    assert_eq!(generate_fourgrams(&six).len(), 10);
    let five: Vec<String> = "ABCDE".chars().map(String::from).collect();
    let tri = names(&generate_trigrams(&five));
    assert_eq!(tri.len(), 8);
    assert_eq!(tri.iter().filter(|g| *g == "B_C_D").count(), 2);
    let set: BTreeSet<&String> = tri.iter().collect();
    assert_eq!(set.len(), 7);
}
