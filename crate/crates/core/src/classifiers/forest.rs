//! Random forest of CART trees grown on Gini impurity.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_row, require_both_classes, ClassifierSpec, FeatureMatrix, FittedModel, ProbClassifier};
use crate::error::{Error, Result};

/// `1 − p0² − p1²` for class counts `(n0, n1)`; zero for an empty node.
pub fn gini(n0: usize, n1: usize) -> f64 {
    let n = (n0 + n1) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (p0, p1) = (n0 as f64 / n, n1 as f64 / n);
    1.0 - p0 * p0 - p1 * p1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        class: u8,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Nodes stored flat; index 0 is the root. Rows with `x[feature] <= threshold`
/// go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

struct Grower<'a> {
    x: &'a FeatureMatrix,
    max_features: usize,
    max_depth: Option<usize>,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

fn majority(x: &FeatureMatrix, idx: &[usize]) -> u8 {
    let n1 = idx.iter().filter(|&&i| x.labels[i] == 1).count();
    u8::from(2 * n1 >= idx.len())
}

impl Grower<'_> {
    /// Best `(feature, threshold)` among a random feature subset, or `None`
    /// when no candidate lowers the weighted impurity.
    fn best_split(&mut self, idx: &[usize]) -> Option<(usize, f64)> {
        let d = self.x.dim();
        let n = idx.len();
        let total1 = idx.iter().filter(|&&i| self.x.labels[i] == 1).count();
        let parent = gini(n - total1, total1) * n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut pairs: Vec<(f64, u8)> = Vec::with_capacity(n);
        for feature in sample(&mut self.rng, d, self.max_features.min(d)).into_iter() {
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (self.x.rows[i][feature], self.x.labels[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left1 = 0;
            for k in 1..n {
                left1 += usize::from(pairs[k - 1].1);
                if pairs[k].0 <= pairs[k - 1].0 {
                    continue;
                }
                let right1 = total1 - left1;
                let cost = gini(k - left1, left1) * k as f64 + gini(n - k - right1, right1) * (n - k) as f64;
                if cost < parent - 1e-12 && best.is_none_or(|(c, _, _)| cost < c) {
                    best = Some((cost, feature, 0.5 * (pairs[k - 1].0 + pairs[k].0)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, idx: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { class: majority(self.x, idx) });
        let pure = idx.iter().all(|&i| self.x.labels[i] == self.x.labels[idx[0]]);
        if pure || idx.len() < 2 || self.max_depth.is_some_and(|m| depth >= m) {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(idx) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x.rows[i][feature] <= threshold);
        let left = self.grow(&l, depth + 1);
        let right = self.grow(&r, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

impl DecisionTree {
    pub fn fit(x: &FeatureMatrix, idx: &[usize], max_features: usize, max_depth: Option<usize>, seed: u64) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::Empty("tree needs at least one row".into()));
        }
        let mut g = Grower {
            x,
            max_features: max_features.max(1),
            max_depth,
            rng: ChaCha8Rng::seed_from_u64(seed),
            nodes: Vec::new(),
        };
        g.grow(idx, 0);
        Ok(DecisionTree { nodes: g.nodes })
    }

    pub fn predict(&self, row: &[f64]) -> u8 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { class } => return *class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub dim: usize,
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Bootstrap-sampled trees considering `⌈√d⌉` features per split. Each
    /// tree has its own seed derived from `seed`, so the result does not
    /// depend on thread count.
    pub fn fit(x: &FeatureMatrix, trees: usize, max_depth: Option<usize>, seed: u64) -> Result<Self> {
        require_both_classes(x)?;
        if trees == 0 {
            return Err(Error::Config("forest needs at least one tree".into()));
        }
        let n = x.len();
        let max_features = (x.dim() as f64).sqrt().ceil() as usize;
        let trees = (0..trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64 + 1);
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                DecisionTree::fit(x, &idx, max_features, max_depth, rng.random())
            })
            .collect::<Result<_>>()?;
        Ok(RandomForest { dim: x.dim(), trees })
    }

    /// Fraction of trees voting class 1.
    pub fn p1(&self, row: &[f64]) -> Result<f64> {
        check_row(self.dim, row)?;
        let votes = self.trees.iter().filter(|t| t.predict(row) == 1).count();
        Ok(votes as f64 / self.trees.len() as f64)
    }
}

pub fn rf_fit(x: &FeatureMatrix, trees: usize, max_depth: Option<usize>, seed: u64) -> Result<ProbClassifier> {
    Ok(ProbClassifier {
        spec: ClassifierSpec::RandomForest { trees, max_depth, seed },
        fitted: Some(FittedModel::RandomForest(RandomForest::fit(x, trees, max_depth, seed)?)),
    })
}
