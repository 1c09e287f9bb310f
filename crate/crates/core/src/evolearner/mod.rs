//! Boolean program trees and the evolutionary learner that builds them.

mod keywords;
mod learner;
mod syntax;
mod tree;

pub use keywords::{extract_keywords, keyword_shares, KeywordShare, Keywords};
pub use learner::{
    dynamic_select, score_tree, train_representation, train_with_progress, Progress,
    Representation, TrainConfig, MAX_DEPTH,
};
pub use syntax::{parse_tree, parse_tree_interning, print_tree};
pub use tree::{Lit, ProgramTree};
