//! Text form of program trees: `or(and($MODERATE_t1.3 !$PRESCRIBE_t0.02) $CONCERN_t0.8)`.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::tree::ProgramTree;
use crate::error::{Error, Result};
use crate::features::FeatureId;

/// Renders `tree` with literal names taken from `features`.
pub fn print_tree(tree: &ProgramTree, features: &[FeatureId]) -> String {
    let mut out = String::new();
    write_tree(tree, features, &mut out);
    out
}

fn write_tree(tree: &ProgramTree, features: &[FeatureId], out: &mut String) {
    match tree {
        ProgramTree::Literal { feature, negated } => {
            if *negated {
                out.push('!');
            }
            let _ = write!(out, "{}", features[*feature]);
        }
        ProgramTree::And(children) | ProgramTree::Or(children) => {
            out.push_str(if matches!(tree, ProgramTree::And(_)) {
                "and("
            } else {
                "or("
            });
            for (i, c) in children.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write_tree(c, features, out);
            }
            out.push(')');
        }
    }
}

/// Parses a tree whose literals must all name features in `features`.
pub fn parse_tree(text: &str, features: &[FeatureId]) -> Result<ProgramTree> {
    let index: HashMap<String, usize> = features
        .iter()
        .enumerate()
        .map(|(i, f)| (f.to_string(), i))
        .collect();
    Parser::new(text).parse(&mut |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownFeature(name.to_owned()))
    })
}

/// Parses a tree, appending previously unseen features to `features`.
pub fn parse_tree_interning(text: &str, features: &mut Vec<FeatureId>) -> Result<ProgramTree> {
    let mut index: HashMap<String, usize> = features
        .iter()
        .enumerate()
        .map(|(i, f)| (f.to_string(), i))
        .collect();
    Parser::new(text).parse(&mut |name: &str| {
        if let Some(&i) = index.get(name) {
            return Ok(i);
        }
        let id = FeatureId::parse(name).ok_or_else(|| Error::UnknownFeature(name.to_owned()))?;
        features.push(id);
        index.insert(name.to_owned(), features.len() - 1);
        Ok(features.len() - 1)
    })
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser { text, pos: 0 }
    }

    fn parse(mut self, resolve: &mut dyn FnMut(&str) -> Result<usize>) -> Result<ProgramTree> {
        let tree = self.node(resolve)?;
        self.skip_ws();
        if self.pos != self.text.len() {
            return Err(self.error("trailing input"));
        }
        Ok(tree)
    }

    fn error(&self, message: &str) -> Error {
        Error::Syntax {
            offset: self.pos,
            message: message.to_owned(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.text.len() - trimmed.len();
    }

    fn node(&mut self, resolve: &mut dyn FnMut(&str) -> Result<usize>) -> Result<ProgramTree> {
        self.skip_ws();
        let rest = self.rest();
        let (is_and, skip) = if rest.starts_with("and(") {
            (true, 4)
        } else if rest.starts_with("or(") {
            (false, 3)
        } else {
            return self.literal(resolve);
        };
        self.pos += skip;
        let mut children = Vec::new();
        loop {
            self.skip_ws();
            match self.rest().chars().next() {
                Some(')') => {
                    self.pos += 1;
                    break;
                }
                Some(_) => children.push(self.node(resolve)?),
                None => return Err(self.error("unclosed connective")),
            }
        }
        if children.is_empty() {
            return Err(self.error("connective without children"));
        }
        Ok(if is_and {
            ProgramTree::And(children)
        } else {
            ProgramTree::Or(children)
        })
    }

    fn literal(&mut self, resolve: &mut dyn FnMut(&str) -> Result<usize>) -> Result<ProgramTree> {
        let negated = self.rest().starts_with('!');
        if negated {
            self.pos += 1;
        }
        if !self.rest().starts_with('$') {
            return Err(self.error("expected `and(`, `or(` or a `$feature` literal"));
        }
        let len = self
            .rest()
            .find(|c: char| c.is_whitespace() || c == '(' || c == ')')
            .unwrap_or(self.rest().len());
        let name = &self.rest()[..len];
        let start = self.pos;
        let feature = resolve(name).map_err(|e| match e {
            Error::UnknownFeature(_) => Error::Syntax {
                offset: start,
                message: format!("unknown feature `{name}`"),
            },
            other => other,
        })?;
        self.pos += len;
        Ok(ProgramTree::Literal { feature, negated })
    }
}

#[cfg(test)]
pub(crate) const TABLE_ONE_TEXT: &str =
    "or(and(or(and($MODERATE_t1.3 !$PRESCRIBE_t0.02) $CONCERN_t0.8 \
$EVIDENCE_t0.4 $INCREASING_t0.3 $RESTRICTED_t0.1) or($ALBUTEROL_t1.2 \
$AMOUNTS_t0.08 $SYSTEM_t0.08 $VIEW_t0.8) or(!$STOMACH_t0.4 \
!$SURROGATE_t0.7)) and(!$BRING_t0.6 !$HIGH_t1.9 !$MINUTES_t2.5 \
!$SAT_t0.7 $STOMACH_t0.4) $LOWEST_t0.08 $NYSTAGMUS_t0.03 $OLANZAPINE_t0.05 \
$OVERDOSE_t0.09 $PRESCRIBE_t0.02 $SUPERFICIAL_t0.16 $WEAPONS_t0.04 \
$WITHDRAWAL_t0.2)";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phrases::NGram;
    use ProgramTree as T;

    const TABLE_ONE: &str = super::TABLE_ONE_TEXT;

    #[test]
    fn table_one_round_trips() {
        let mut features = Vec::new();
        let tree = parse_tree_interning(TABLE_ONE, &mut features).unwrap();
        assert_eq!(print_tree(&tree, &features), TABLE_ONE);
        let again = parse_tree(TABLE_ONE, &features).unwrap();
        assert_eq!(again, tree);
    }

    #[test]
    fn table_one_fires_on_overdose_alone() {
        let mut features = Vec::new();
        let tree = parse_tree_interning(TABLE_ONE, &mut features).unwrap();
        let overdose = features
            .iter()
            .position(|f| f.term == NGram::unigram("OVERDOSE"))
            .unwrap();
        let mut row = vec![false; features.len()];
        row[overdose] = true;
        assert!(tree.evaluate(&row).unwrap());
    }

    #[test]
    fn syntax_errors() {
        let features = vec![FeatureId::new(NGram::unigram("A"), 1.0)];
        assert!(parse_tree("and($A_t1.0", &features).is_err());
        assert!(parse_tree("and()", &features).is_err());
        assert!(parse_tree("$B_t1.0", &features).is_err());
        assert!(parse_tree("$A_t1.0 extra", &features).is_err());
        assert_eq!(parse_tree("!$A_t1.0", &features).unwrap(), T::not(0));
    }
}
