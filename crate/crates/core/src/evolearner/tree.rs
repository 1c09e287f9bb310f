use std::collections::BTreeSet;

use fixedbitset::FixedBitSet;

use crate::error::{Error, Result};

/// Boolean and/or expression over feature literals.
///
/// Variant order defines the canonical child order used by
/// [`ProgramTree::normalize`]: literals first, by feature index then polarity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProgramTree {
    Literal { feature: usize, negated: bool },
    And(Vec<ProgramTree>),
    Or(Vec<ProgramTree>),
}

/// A feature literal, `!$X` when negated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit {
    pub feature: usize,
    pub negated: bool,
}

impl Lit {
    pub fn pos(feature: usize) -> Self {
        Lit {
            feature,
            negated: false,
        }
    }

    pub fn neg(feature: usize) -> Self {
        Lit {
            feature,
            negated: true,
        }
    }

    pub fn tree(self) -> ProgramTree {
        ProgramTree::Literal {
            feature: self.feature,
            negated: self.negated,
        }
    }
}

impl ProgramTree {
    pub fn lit(feature: usize) -> Self {
        Lit::pos(feature).tree()
    }

    pub fn not(feature: usize) -> Self {
        Lit::neg(feature).tree()
    }

    pub fn and(children: Vec<ProgramTree>) -> Self {
        ProgramTree::And(children)
    }

    pub fn or(children: Vec<ProgramTree>) -> Self {
        ProgramTree::Or(children)
    }

    pub fn children(&self) -> &[ProgramTree] {
        match self {
            ProgramTree::And(c) | ProgramTree::Or(c) => c,
            ProgramTree::Literal { .. } => &[],
        }
    }

    pub(crate) fn children_mut(&mut self) -> Option<&mut Vec<ProgramTree>> {
        match self {
            ProgramTree::And(c) | ProgramTree::Or(c) => Some(c),
            ProgramTree::Literal { .. } => None,
        }
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, ProgramTree::Literal { .. })
    }

    /// Evaluates against one row of features. Every literal index must be
    /// in range, including ones short-circuiting would skip.
    pub fn evaluate(&self, row: &[bool]) -> Result<bool> {
        if let Some(&index) = self.features().last() {
            if index >= row.len() {
                return Err(Error::FeatureIndex {
                    index,
                    width: row.len(),
                });
            }
        }
        Ok(self.eval_row(row))
    }

    fn eval_row(&self, row: &[bool]) -> bool {
        match self {
            ProgramTree::Literal { feature, negated } => row[*feature] != *negated,
            ProgramTree::And(children) => children.iter().all(|c| c.eval_row(row)),
            ProgramTree::Or(children) => children.iter().any(|c| c.eval_row(row)),
        }
    }

    /// Evaluates every row at once; `columns[f]` holds feature `f` over all
    /// rows. Literal indices must be in range.
    pub fn evaluate_columns(&self, columns: &[&FixedBitSet], n_rows: usize) -> FixedBitSet {
        match self {
            ProgramTree::Literal { feature, negated } => {
                let mut bits = columns[*feature].clone();
                if *negated {
                    bits.toggle_range(..);
                }
                bits
            }
            ProgramTree::And(children) => {
                let mut iter = children.iter();
                let mut acc = match iter.next() {
                    Some(first) => first.evaluate_columns(columns, n_rows),
                    None => {
                        let mut all = FixedBitSet::with_capacity(n_rows);
                        all.insert_range(..);
                        return all;
                    }
                };
                for c in iter {
                    acc.intersect_with(&c.evaluate_columns(columns, n_rows));
                }
                acc
            }
            ProgramTree::Or(children) => {
                let mut acc = FixedBitSet::with_capacity(n_rows);
                for c in children {
                    acc.union_with(&c.evaluate_columns(columns, n_rows));
                }
                acc
            }
        }
    }

    /// Connective levels above the leaves; a bare literal has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            ProgramTree::Literal { .. } => 0,
            ProgramTree::And(c) | ProgramTree::Or(c) => {
                1 + c.iter().map(ProgramTree::depth).max().unwrap_or(0)
            }
        }
    }

    /// Node count.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(ProgramTree::size).sum::<usize>()
    }

    pub fn literals(&self) -> Vec<Lit> {
        let mut out = Vec::new();
        self.collect_literals(&mut out);
        out
    }

    fn collect_literals(&self, out: &mut Vec<Lit>) {
        match self {
            ProgramTree::Literal { feature, negated } => out.push(Lit {
                feature: *feature,
                negated: *negated,
            }),
            _ => self.children().iter().for_each(|c| c.collect_literals(out)),
        }
    }

    pub fn features(&self) -> BTreeSet<usize> {
        self.literals().into_iter().map(|l| l.feature).collect()
    }

    /// Canonical form: same-connective nesting flattened, single-child
    /// connectives collapsed, children sorted and duplicates removed.
    /// Semantics are unchanged.
    pub fn normalize(self) -> ProgramTree {
        match self {
            ProgramTree::Literal { .. } => self,
            ProgramTree::And(children) => normalize_connective(children, true),
            ProgramTree::Or(children) => normalize_connective(children, false),
        }
    }

    /// Checks the structural invariants that [`ProgramTree::normalize`]
    /// establishes.
    pub fn is_normalized(&self) -> bool {
        match self {
            ProgramTree::Literal { .. } => true,
            ProgramTree::And(children) | ProgramTree::Or(children) => {
                let is_and = matches!(self, ProgramTree::And(_));
                if children.len() < 2 {
                    return false;
                }
                let nested_same = children.iter().any(|c| match c {
                    ProgramTree::And(_) => is_and,
                    ProgramTree::Or(_) => !is_and,
                    ProgramTree::Literal { .. } => false,
                });
                let sorted_unique = children.windows(2).all(|w| w[0] < w[1]);
                !nested_same && sorted_unique && children.iter().all(ProgramTree::is_normalized)
            }
        }
    }
}

fn normalize_connective(children: Vec<ProgramTree>, is_and: bool) -> ProgramTree {
    let mut flat = Vec::with_capacity(children.len());
    for child in children {
        match child.normalize() {
            ProgramTree::And(grand) if is_and => flat.extend(grand),
            ProgramTree::Or(grand) if !is_and => flat.extend(grand),
            other => flat.push(other),
        }
    }
    flat.sort();
    flat.dedup();
    if flat.len() == 1 {
        return flat.pop().expect("one child");
    }
    if is_and {
        ProgramTree::And(flat)
    } else {
        ProgramTree::Or(flat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ProgramTree as T;

    #[test]
    fn evaluate_example() {
        let tree = T::or(vec![T::and(vec![T::lit(0), T::not(1)]), T::lit(2)]);
        assert!(tree.evaluate(&[true, false, false]).unwrap());
        assert!(!tree.evaluate(&[true, true, false]).unwrap());
        assert!(matches!(
            tree.evaluate(&[true, false]),
            Err(Error::FeatureIndex { index: 2, width: 2 })
        ));
    }

    #[test]
    fn single_literal_equals_the_literal() {
        for v in [true, false] {
            assert_eq!(T::lit(0).evaluate(&[v]).unwrap(), v);
            assert_eq!(T::not(0).evaluate(&[v]).unwrap(), !v);
            assert_eq!(T::and(vec![T::lit(0)]).normalize(), T::lit(0));
        }
    }

    #[test]
    fn normalize_flattens_and_dedups() {
        let tree = T::and(vec![
            T::and(vec![T::lit(2), T::lit(1)]),
            T::lit(1),
            T::or(vec![T::or(vec![T::lit(3)]), T::not(4)]),
        ]);
        let norm = tree.clone().normalize();
        assert_eq!(
            norm,
            T::and(vec![
                T::lit(1),
                T::lit(2),
                T::or(vec![T::lit(3), T::not(4)])
            ])
        );
        assert!(norm.is_normalized());
        assert!(!tree.is_normalized());
        assert_eq!(norm.depth(), 2);
    }

    #[test]
    fn column_evaluation_matches_rows() {
        let rows = [
            [true, false, true],
            [false, false, true],
            [true, true, false],
        ];
        let mut cols = vec![FixedBitSet::with_capacity(3); 3];
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                cols[c].set(r, v);
            }
        }
        let refs: Vec<&FixedBitSet> = cols.iter().collect();
        let tree = T::or(vec![T::and(vec![T::lit(0), T::not(1)]), T::not(2)]);
        let bits = tree.evaluate_columns(&refs, 3);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(bits.contains(r), tree.evaluate(row).unwrap());
        }
    }
}
