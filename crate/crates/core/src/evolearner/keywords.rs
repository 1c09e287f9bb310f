use std::collections::{BTreeMap, BTreeSet};

use super::tree::ProgramTree;
use crate::features::FeatureId;

/// Terms used by a set of trees, split by literal polarity.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Keywords {
    /// Terms with a non-negated literal somewhere: more common in the
    /// positive cohort.
    pub positive: Vec<String>,
    /// Terms with a negated literal somewhere.
    pub negative: Vec<String>,
}

/// Collects the term names behind each literal. A term may appear in both
/// lists. Both lists are sorted and deduplicated.
pub fn extract_keywords<'a>(
    trees: impl IntoIterator<Item = &'a ProgramTree>,
    features: &[FeatureId],
) -> Keywords {
    let mut positive = BTreeSet::new();
    let mut negative = BTreeSet::new();
    for tree in trees {
        for lit in tree.literals() {
            let term = features[lit.feature].term.to_string();
            if lit.negated {
                negative.insert(term);
            } else {
                positive.insert(term);
            }
        }
    }
    Keywords {
        positive: positive.into_iter().collect(),
        negative: negative.into_iter().collect(),
    }
}

/// Fraction of trees that mention a term in each polarity.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KeywordShare {
    pub positive: f64,
    pub negative: f64,
}

pub fn keyword_shares(
    trees: &[ProgramTree],
    features: &[FeatureId],
) -> BTreeMap<String, KeywordShare> {
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for tree in trees {
        let k = extract_keywords([tree], features);
        for t in k.positive {
            counts.entry(t).or_default().0 += 1;
        }
        for t in k.negative {
            counts.entry(t).or_default().1 += 1;
        }
    }
    let n = trees.len() as f64;
    counts
        .into_iter()
        .map(|(t, (p, q))| {
            (
                t,
                KeywordShare {
                    positive: p as f64 / n,
                    negative: q as f64 / n,
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolearner::parse_tree_interning;
    use crate::phrases::NGram;
    use ProgramTree as T;

    #[test]
    fn polarity_split() {
        let features = vec![
            FeatureId::new(NGram::unigram("A"), 1.0),
            FeatureId::new(NGram::unigram("B"), 1.0),
        ];
        let tree = T::and(vec![T::lit(0), T::not(1)]);
        let k = extract_keywords([&tree], &features);
        assert_eq!(k.positive, ["A"]);
        assert_eq!(k.negative, ["B"]);
        assert_eq!(extract_keywords([], &features), Keywords::default());
    }

    #[test]
    fn table_one_prescribe_in_both() {
        let mut features = Vec::new();
        let tree =
            parse_tree_interning(super::super::syntax::TABLE_ONE_TEXT, &mut features).unwrap();
        let k = extract_keywords([&tree], &features);
        assert!(k.positive.contains(&"PRESCRIBE".to_string()));
        assert!(k.negative.contains(&"PRESCRIBE".to_string()));
        assert!(k.negative.contains(&"STOMACH".to_string()));
        assert!(k.positive.contains(&"STOMACH".to_string()));
    }

    #[test]
    fn shares() {
        let features = vec![FeatureId::new(NGram::unigram("A"), 1.0)];
        let trees = [
            T::lit(0),
            T::not(0),
            T::lit(0),
            T::and(vec![T::lit(0), T::not(0)]),
        ];
        let s = keyword_shares(&trees, &features)["A"];
        assert_eq!(s.positive, 0.75);
        assert_eq!(s.negative, 0.5);
    }
}
