use std::collections::BTreeSet;

use fixedbitset::FixedBitSet;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{Lit, ProgramTree};
use crate::error::{Error, Result};
use crate::features::{class_mi_bits, FeatureMatrix};

/// Trees never grow deeper than this many connective levels.
pub const MAX_DEPTH: usize = 6;

/// Features sampled when wrapping the best tree in a new connective.
const DEEPEN_SAMPLE: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Columns kept by static selection before training.
    pub static_features: usize,
    /// Features offered to each exemplar's neighborhood.
    pub dynamic_features: usize,
    /// Maximum number of scoring calls.
    pub eval_budget: u64,
    pub seed: u64,
    /// Consecutive non-improving passes before the search restarts from a
    /// deeper tree.
    pub restart_stagnation: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            static_features: 3000,
            dynamic_features: 90,
            eval_budget: 9000,
            seed: 0,
            restart_stagnation: 3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eval_budget < 1 {
            return Err(Error::EmptyBudget);
        }
        if self.static_features == 0 || self.dynamic_features == 0 || self.restart_stagnation == 0 {
            return Err(Error::Config(
                "static_features, dynamic_features and restart_stagnation must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A trained tree with its training accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub tree: ProgramTree,
    pub train_accuracy: f64,
    pub seed: u64,
    pub evaluations_used: u64,
}

/// Best score seen after a given number of evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub evaluations: u64,
    pub best_score: f64,
}

/// Column view of a matrix for whole-dataset tree evaluation.
pub struct TrainingView<'a> {
    columns: Vec<&'a FixedBitSet>,
    targets: FixedBitSet,
    n_rows: usize,
}

impl<'a> TrainingView<'a> {
    pub fn new(matrix: &'a FeatureMatrix) -> Self {
        TrainingView {
            columns: (0..matrix.n_features()).map(|j| matrix.column(j)).collect(),
            targets: matrix.targets(),
            n_rows: matrix.n_rows(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    fn check(&self, tree: &ProgramTree) -> Result<()> {
        match tree.features().last() {
            Some(&f) if f >= self.n_features() => Err(Error::FeatureIndex {
                index: f,
                width: self.n_features(),
            }),
            _ => Ok(()),
        }
    }

    fn predict(&self, tree: &ProgramTree) -> FixedBitSet {
        tree.evaluate_columns(&self.columns, self.n_rows)
    }

    fn accuracy(&self, predictions: &FixedBitSet) -> f64 {
        let wrong = predictions.symmetric_difference_count(&self.targets);
        (self.n_rows - wrong) as f64 / self.n_rows as f64
    }

    /// Rows the prediction gets wrong.
    fn errors(&self, predictions: &FixedBitSet) -> FixedBitSet {
        let mut e = predictions.clone();
        e.symmetric_difference_with(&self.targets);
        e
    }

    /// Top `k` features by class-MI against `signal`, skipping `exclude`.
    /// Ties go to higher support, then the lower index.
    fn rank_against(
        &self,
        signal: &FixedBitSet,
        exclude: &BTreeSet<usize>,
        k: usize,
    ) -> Vec<usize> {
        let n_signal = signal.count_ones(..);
        let scored: Vec<(usize, crate::features::MiScore)> = (0..self.n_features())
            .filter(|j| !exclude.contains(j))
            .map(|j| (j, class_mi_bits(self.columns[j], signal, n_signal)))
            .collect();
        let mut scored = scored;
        let cmp = |a: &(usize, crate::features::MiScore), b: &(usize, crate::features::MiScore)| {
            a.1.rank_cmp(&b.1).then_with(|| a.0.cmp(&b.0))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        scored.into_iter().map(|(j, _)| j).collect()
    }
}

/// Fraction of rows where the tree agrees with the positive-class indicator.
/// Every call is one evaluation in the learner's budget accounting.
pub fn score_tree(tree: &ProgramTree, matrix: &FeatureMatrix) -> Result<f64> {
    let view = TrainingView::new(matrix);
    view.check(tree)?;
    Ok(view.accuracy(&view.predict(tree)))
}

/// The `k` features most informative about the exemplar's mistakes.
///
/// The exemplar's per-row error vector plays the role of the class labels in
/// class-MI ranking; features already in the exemplar are skipped.
pub fn dynamic_select(
    exemplar: &ProgramTree,
    matrix: &FeatureMatrix,
    k: usize,
) -> Result<Vec<usize>> {
    let view = TrainingView::new(matrix);
    view.check(exemplar)?;
    let errors = view.errors(&view.predict(exemplar));
    Ok(view.rank_against(&errors, &exemplar.features(), k))
}

/// Runs the evolutionary search; see [`train_with_progress`].
pub fn train_representation(
    matrix: &FeatureMatrix,
    config: &TrainConfig,
) -> Result<Representation> {
    train_with_progress(matrix, config).map(|(rep, _)| rep)
}

/// Two nested loops over boolean program trees.
///
/// The outer loop starts from the best single literal among the features
/// ranked against the labels. Each inner pass hill-climbs with
/// first-improvement over a shuffled neighborhood (insert, wrap, remove, flip
/// a literal; swap a connective), moving to an equally good neighbor when
/// nothing improves, and then tries one crossover that splices a random
/// subtree of the best tree into the current one. Candidate literals come
/// from dynamic feature selection against the current tree's errors. After
/// `restart_stagnation` passes without improvement the outer loop restarts
/// from the best tree wrapped in the alternate connective with a fresh
/// literal, or from a fresh literal once the depth cap is reached.
/// The search halts on a perfect score or when the budget is spent.
pub fn train_with_progress(
    matrix: &FeatureMatrix,
    config: &TrainConfig,
) -> Result<(Representation, Vec<Progress>)> {
    config.validate()?;
    if matrix.n_rows() == 0 || matrix.n_features() == 0 {
        return Err(Error::Config("training matrix is empty".into()));
    }
    let view = TrainingView::new(matrix);
    let mut search = Search::new(&view, config);
    search.run();
    let rep = Representation {
        tree: search.best.tree.clone(),
        train_accuracy: search.best.score,
        seed: config.seed,
        evaluations_used: search.used,
    };
    Ok((rep, search.progress))
}

#[derive(Clone)]
struct Scored {
    tree: ProgramTree,
    score: f64,
    predictions: FixedBitSet,
}

enum Step {
    Better(Scored),
    Sideways(Scored),
    Stuck,
}

enum Move {
    Insert {
        path: Vec<usize>,
        lit: Lit,
    },
    Wrap {
        path: Vec<usize>,
        lit: Lit,
        conjunction: bool,
    },
    Remove {
        path: Vec<usize>,
    },
    Flip {
        path: Vec<usize>,
    },
    Swap {
        path: Vec<usize>,
    },
}

struct Search<'v, 'a> {
    view: &'v TrainingView<'a>,
    budget: u64,
    used: u64,
    k: usize,
    stagnation_limit: usize,
    rng: ChaCha8Rng,
    best: Scored,
    progress: Vec<Progress>,
    label_ranking: Vec<usize>,
    restarts: usize,
}

impl<'v, 'a> Search<'v, 'a> {
    fn new(view: &'v TrainingView<'a>, config: &TrainConfig) -> Self {
        let k = config.dynamic_features.min(view.n_features());
        let label_ranking = view.rank_against(&view.targets, &BTreeSet::new(), k);
        let placeholder = ProgramTree::lit(label_ranking[0]);
        Search {
            view,
            budget: config.eval_budget,
            used: 0,
            k,
            stagnation_limit: config.restart_stagnation,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            best: Scored {
                predictions: view.predict(&placeholder),
                tree: placeholder,
                score: f64::NEG_INFINITY,
            },
            progress: Vec::new(),
            label_ranking,
            restarts: 0,
        }
    }

    fn done(&self) -> bool {
        self.used >= self.budget || self.best.score >= 1.0
    }

    /// Scores a normalized tree, charging one evaluation.
    fn eval(&mut self, tree: ProgramTree) -> Option<Scored> {
        if self.used >= self.budget {
            return None;
        }
        self.used += 1;
        let predictions = self.view.predict(&tree);
        let score = self.view.accuracy(&predictions);
        let scored = Scored {
            tree,
            score,
            predictions,
        };
        if score > self.best.score {
            self.best = scored.clone();
            self.progress.push(Progress {
                evaluations: self.used,
                best_score: score,
            });
        }
        Some(scored)
    }

    /// Best literal among `features`, positive polarity first; ties keep the
    /// earlier candidate.
    fn best_literal(&mut self, features: &[usize]) -> Option<Scored> {
        let mut winner: Option<Scored> = None;
        for &f in features {
            for lit in [Lit::pos(f), Lit::neg(f)] {
                let Some(s) = self.eval(lit.tree()) else {
                    return winner;
                };
                if winner.as_ref().is_none_or(|w| s.score > w.score) {
                    winner = Some(s);
                }
                if self.done() {
                    return winner;
                }
            }
        }
        winner
    }

    fn run(&mut self) {
        let ranking = self.label_ranking.clone();
        let Some(mut current) = self.best_literal(&ranking) else {
            return;
        };
        let mut stagnation = 0;
        let mut local_optimum = false;
        while !self.done() {
            let mut improved = false;
            if !local_optimum {
                match self.climb(&current) {
                    Some(Step::Better(next)) => {
                        current = next;
                        improved = true;
                    }
                    Some(Step::Sideways(next)) => current = next,
                    Some(Step::Stuck) => local_optimum = true,
                    None => {}
                }
            }
            if self.done() {
                break;
            }
            let child = self.crossover(&current.tree);
            if child != current.tree && child.depth() <= MAX_DEPTH {
                if let Some(s) = self.eval(child) {
                    if s.score > current.score {
                        current = s;
                        improved = true;
                    }
                }
            }
            if improved {
                stagnation = 0;
                local_optimum = false;
            } else {
                stagnation += 1;
            }
            if stagnation >= self.stagnation_limit && !self.done() {
                if let Some(next) = self.restart() {
                    current = next;
                }
                stagnation = 0;
                local_optimum = false;
            }
        }
    }

    /// One first-improvement pass. Without an improvement it moves to the
    /// first equally good neighbor, if any. `None` when the budget ran out
    /// mid-pass.
    fn climb(&mut self, current: &Scored) -> Option<Step> {
        let errors = self.view.errors(&current.predictions);
        let in_tree = current.tree.features();
        let mut pool = self.view.rank_against(&errors, &in_tree, self.k);
        pool.extend(in_tree.iter().copied());
        pool.sort_unstable();
        pool.dedup();
        let lits: Vec<Lit> = pool
            .iter()
            .flat_map(|&f| [Lit::pos(f), Lit::neg(f)])
            .collect();

        let mut moves = neighborhood(&current.tree, &lits);
        moves.shuffle(&mut self.rng);
        let mut plateau = None;
        for mv in &moves {
            let candidate = apply_move(&current.tree, mv);
            if candidate == current.tree || candidate.depth() > MAX_DEPTH {
                continue;
            }
            let s = self.eval(candidate)?;
            if s.score > current.score {
                return Some(Step::Better(s));
            }
            if plateau.is_none() && s.score == current.score {
                plateau = Some(s);
            }
        }
        Some(plateau.map_or(Step::Stuck, Step::Sideways))
    }

    /// Replaces a random node of `current` with a random subtree of the best
    /// tree.
    fn crossover(&mut self, current: &ProgramTree) -> ProgramTree {
        let donors = node_paths(&self.best.tree);
        let donor = &donors[self.rng.gen_range(0..donors.len())];
        let graft = node_at(&self.best.tree, donor).clone();
        let sites = node_paths(current);
        let site = &sites[self.rng.gen_range(0..sites.len())];
        let mut child = current.clone();
        *node_mut(&mut child, site) = graft;
        child.normalize()
    }

    /// New exemplar: the best tree wrapped in the alternate connective with a
    /// fresh literal, or a fresh single literal at the depth cap.
    fn restart(&mut self) -> Option<Scored> {
        self.restarts += 1;
        let base = self.best.clone();
        if base.tree.depth() + 1 > MAX_DEPTH {
            return self.fresh_literal();
        }
        let conjunction = match base.tree {
            ProgramTree::And(_) => false,
            ProgramTree::Or(_) => true,
            ProgramTree::Literal { .. } => self.restarts.is_multiple_of(2),
        };
        let errors = self.view.errors(&base.predictions);
        let in_tree = base.tree.features();
        let mut pool = self.view.rank_against(&errors, &in_tree, self.k);
        pool.extend(in_tree.iter().copied());
        pool.sort_unstable();
        pool.dedup();
        let take = DEEPEN_SAMPLE.min(pool.len());
        let mut picked: Vec<usize> = index::sample(&mut self.rng, pool.len(), take)
            .into_iter()
            .map(|i| pool[i])
            .collect();
        picked.sort_unstable();

        let mut winner: Option<Scored> = None;
        for f in picked {
            for lit in [Lit::pos(f), Lit::neg(f)] {
                let children = vec![base.tree.clone(), lit.tree()];
                let candidate = if conjunction {
                    ProgramTree::And(children)
                } else {
                    ProgramTree::Or(children)
                }
                .normalize();
                if candidate == base.tree {
                    continue;
                }
                let Some(s) = self.eval(candidate) else {
                    return winner;
                };
                if winner.as_ref().is_none_or(|w| s.score > w.score) {
                    winner = Some(s);
                }
                if self.done() {
                    return winner;
                }
            }
        }
        match winner {
            Some(w) => Some(w),
            None => self.fresh_literal(),
        }
    }

    fn fresh_literal(&mut self) -> Option<Scored> {
        let f = self.label_ranking[self.rng.gen_range(0..self.label_ranking.len())];
        self.best_literal(&[f])
    }
}

/// Every node's path from the root, in preorder.
fn node_paths(tree: &ProgramTree) -> Vec<Vec<usize>> {
    fn walk(tree: &ProgramTree, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        out.push(path.clone());
        for (i, c) in tree.children().iter().enumerate() {
            path.push(i);
            walk(c, path, out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    walk(tree, &mut Vec::new(), &mut out);
    out
}

fn node_at<'t>(tree: &'t ProgramTree, path: &[usize]) -> &'t ProgramTree {
    path.iter().fold(tree, |node, &i| &node.children()[i])
}

fn node_mut<'t>(tree: &'t mut ProgramTree, path: &[usize]) -> &'t mut ProgramTree {
    let mut node = tree;
    for &i in path {
        node = &mut node.children_mut().expect("path runs through connectives")[i];
    }
    node
}

fn neighborhood(tree: &ProgramTree, lits: &[Lit]) -> Vec<Move> {
    let mut moves = Vec::new();
    for path in node_paths(tree) {
        let node = node_at(tree, &path);
        let parent_is_and = path
            .split_last()
            .map(|(_, parent)| matches!(node_at(tree, parent), ProgramTree::And(_)));
        if !path.is_empty() {
            moves.push(Move::Remove { path: path.clone() });
        }
        match node {
            ProgramTree::Literal { .. } => {
                moves.push(Move::Flip { path: path.clone() });
                // Leaves grow a connective of the opposite kind to their
                // parent; a bare root literal can grow either.
                let kinds: &[bool] = match parent_is_and {
                    Some(true) => &[false],
                    Some(false) => &[true],
                    None => &[true, false],
                };
                for &conjunction in kinds {
                    for &lit in lits {
                        moves.push(Move::Wrap {
                            path: path.clone(),
                            lit,
                            conjunction,
                        });
                    }
                }
            }
            ProgramTree::And(_) | ProgramTree::Or(_) => {
                moves.push(Move::Swap { path: path.clone() });
                for &lit in lits {
                    moves.push(Move::Insert {
                        path: path.clone(),
                        lit,
                    });
                }
                if path.is_empty() {
                    let conjunction = matches!(node, ProgramTree::Or(_));
                    for &lit in lits {
                        moves.push(Move::Wrap {
                            path: Vec::new(),
                            lit,
                            conjunction,
                        });
                    }
                }
            }
        }
    }
    moves
}

fn apply_move(tree: &ProgramTree, mv: &Move) -> ProgramTree {
    let mut t = tree.clone();
    match mv {
        Move::Insert { path, lit } => {
            if let Some(children) = node_mut(&mut t, path).children_mut() {
                children.push(lit.tree());
            }
        }
        Move::Wrap {
            path,
            lit,
            conjunction,
        } => {
            let node = node_mut(&mut t, path);
            let old = std::mem::replace(node, ProgramTree::And(Vec::new()));
            let children = vec![old, lit.tree()];
            *node = if *conjunction {
                ProgramTree::And(children)
            } else {
                ProgramTree::Or(children)
            };
        }
        Move::Remove { path } => {
            let (last, parent) = path.split_last().expect("root is never removed");
            if let Some(children) = node_mut(&mut t, parent).children_mut() {
                children.remove(*last);
            }
        }
        Move::Flip { path } => {
            if let ProgramTree::Literal { negated, .. } = node_mut(&mut t, path) {
                *negated = !*negated;
            }
        }
        Move::Swap { path } => {
            let node = node_mut(&mut t, path);
            *node = match std::mem::replace(node, ProgramTree::And(Vec::new())) {
                ProgramTree::And(c) => ProgramTree::Or(c),
                ProgramTree::Or(c) => ProgramTree::And(c),
                lit => lit,
            };
        }
    }
    t.normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ProgramTree as T;

    fn xor_matrix() -> FeatureMatrix {
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for _ in 0..10 {
            for (a, b) in [(false, false), (false, true), (true, false), (true, true)] {
                rows.push(vec![a, b]);
                targets.push(a != b);
            }
        }
        FeatureMatrix::from_bool_rows(&rows, &targets)
    }

    #[test]
    fn score_examples() {
        let rows = vec![vec![true], vec![false], vec![true], vec![false]];
        let targets = [true, false, true, false];
        let m = FeatureMatrix::from_bool_rows(&rows, &targets);
        assert_eq!(score_tree(&T::lit(0), &m).unwrap(), 1.0);
        assert_eq!(score_tree(&T::not(0), &m).unwrap(), 0.0);
        let never = T::and(vec![T::lit(0), T::not(0)]);
        assert_eq!(score_tree(&never, &m).unwrap(), 0.5);
        assert!(score_tree(&T::lit(3), &m).is_err());
    }

    #[test]
    fn separable_matrix_is_solved_at_once() {
        let rows: Vec<Vec<bool>> = (0..20).map(|i| vec![i % 3 == 0, i % 2 == 0]).collect();
        let targets: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
        let m = FeatureMatrix::from_bool_rows(&rows, &targets);
        let rep = train_representation(
            &m,
            &TrainConfig {
                eval_budget: 100,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        assert_eq!(rep.train_accuracy, 1.0);
        assert!(rep.evaluations_used <= 100);
        assert_eq!(rep.tree, T::lit(1));
    }

    #[test]
    fn xor_is_learned() {
        let m = xor_matrix();
        let config = TrainConfig {
            eval_budget: 10_000,
            seed: 3,
            ..TrainConfig::default()
        };
        let rep = train_representation(&m, &config).unwrap();
        assert_eq!(rep.train_accuracy, 1.0);
        assert!(rep.tree.depth() >= 2);
        assert!(rep.tree.is_normalized());
    }

    #[test]
    fn training_is_deterministic() {
        let m = xor_matrix();
        let config = TrainConfig {
            eval_budget: 500,
            seed: 11,
            ..TrainConfig::default()
        };
        let a = train_representation(&m, &config).unwrap();
        let b = train_representation(&m, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_budget_is_rejected() {
        let m = xor_matrix();
        let config = TrainConfig {
            eval_budget: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_representation(&m, &config),
            Err(Error::EmptyBudget)
        ));
    }

    #[test]
    fn perfect_exemplar_selects_by_index() {
        let rows: Vec<Vec<bool>> = (0..8)
            .map(|i| vec![i % 2 == 0, i < 4, i % 3 == 0, true])
            .collect();
        let targets: Vec<bool> = (0..8).map(|i| i % 2 == 0).collect();
        let m = FeatureMatrix::from_bool_rows(&rows, &targets);
        // All-correct exemplar: every score ties at zero.
        assert_eq!(dynamic_select(&T::lit(0), &m, 2).unwrap(), [1, 2]);
    }

    #[test]
    fn error_matching_feature_is_selected_first() {
        // Exemplar f0 misclassifies exactly the rows where f2 is true.
        let rows: Vec<Vec<bool>> = (0..8)
            .map(|i| vec![i % 2 == 0, i < 4, i == 1 || i == 2])
            .collect();
        let targets: Vec<bool> = (0..8).map(|i| (i % 2 == 0) != (i == 1 || i == 2)).collect();
        let m = FeatureMatrix::from_bool_rows(&rows, &targets);
        assert_eq!(dynamic_select(&T::lit(0), &m, 1).unwrap(), [2]);
    }

    #[test]
    fn moves_keep_trees_normalized() {
        let tree = T::or(vec![T::and(vec![T::lit(0), T::not(1)]), T::lit(2)]).normalize();
        let lits = [Lit::pos(0), Lit::neg(3)];
        for mv in neighborhood(&tree, &lits) {
            let t = apply_move(&tree, &mv);
            assert!(t.is_normalized(), "{t:?}");
        }
    }
}
