//! Random forest of CART classification trees.
//!
//! Each tree is grown on a bootstrap sample to purity (minimum leaf size
//! `min_leaf`), choosing the best Gini split over `mtry` randomly drawn
//! features at every node. Missing values are replaced by training medians.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::AuditError;
use crate::seed::unit_rng;
use crate::stats::median;

const STREAM_TREE: u64 = 0x7EE5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; `⌊√p⌋` when unset.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 500, mtry: None, min_leaf: 1, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(usize),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(c) => return c,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    trees: Vec<Tree>,
    n_classes: usize,
    /// Training medians used to fill missing values.
    fill: Vec<f64>,
}

impl ForestModel {
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.fill.len()
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

fn impute(rows: &[&[Option<f64>]], fill: &[f64]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| r.iter().zip(fill).map(|(v, f)| v.unwrap_or(*f)).collect())
        .collect()
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    mtry: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
    rng: ChaCha8Rng,
    // scratch buffers reused across nodes
    pairs: Vec<(f64, usize)>,
    left: Vec<usize>,
    right: Vec<usize>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Grower<'_> {
    fn leaf_class(&mut self, counts: &[usize]) -> usize {
        let best = *counts.iter().max().unwrap_or(&0);
        let tied: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] == best).collect();
        if tied.len() == 1 {
            tied[0]
        } else {
            tied[self.rng.random_range(0..tied.len())]
        }
    }

    /// Best split of `idx` on `feature`, maximising `Σ_side Σ_c n_c² / n_side`
    /// (equivalent to minimising the weighted Gini impurity).
    fn scan(&mut self, idx: &[usize], feature: usize, totals: &[usize]) -> Option<(f64, f64)> {
        self.pairs.clear();
        self.pairs.extend(idx.iter().map(|&i| (self.x[i][feature], self.y[i])));
        self.pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let n = self.pairs.len();
        self.left.clear();
        self.left.resize(self.n_classes, 0);
        self.right.clear();
        self.right.extend_from_slice(totals);
        let mut left_sq = 0.0;
        let mut right_sq: f64 = totals.iter().map(|&c| (c * c) as f64).sum();
        let mut best: Option<(f64, f64)> = None;
        for k in 0..n - 1 {
            let c = self.pairs[k].1;
            left_sq += (2 * self.left[c] + 1) as f64;
            right_sq -= (2 * self.right[c] - 1) as f64;
            self.left[c] += 1;
            self.right[c] -= 1;
            let n_left = k + 1;
            if n_left < self.min_leaf || n - n_left < self.min_leaf {
                continue;
            }
            let (a, b) = (self.pairs[k].0, self.pairs[k + 1].0);
            if a == b {
                continue;
            }
            let score = left_sq / n_left as f64 + right_sq / (n - n_left) as f64;
            if best.is_none_or(|(s, _)| score > s) {
                let mid = a + (b - a) / 2.0;
                best = Some((score, if mid < b { mid } else { a }));
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(0));
        let mut counts = vec![0usize; self.n_classes];
        for &i in &idx {
            counts[self.y[i]] += 1;
        }
        let n = idx.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || n < 2 * self.min_leaf {
            self.nodes[id] = Node::Leaf(self.leaf_class(&counts));
            return id;
        }
        let parent: f64 = counts.iter().map(|&c| (c * c) as f64).sum::<f64>() / n as f64;
        let p = self.x[0].len();
        let features = sample(&mut self.rng, p, self.mtry.min(p));
        let mut best: Option<BestSplit> = None;
        for feature in features.iter() {
            if let Some((score, threshold)) = self.scan(&idx, feature, &counts) {
                if score > parent + 1e-12 && best.as_ref().is_none_or(|b| score > b.score) {
                    best = Some(BestSplit { feature, threshold, score });
                }
            }
        }
        let Some(split) = best else {
            self.nodes[id] = Node::Leaf(self.leaf_class(&counts));
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.into_iter().partition(|&i| self.x[i][split.feature] <= split.threshold);
        let left = self.grow(l);
        let right = self.grow(r);
        self.nodes[id] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        id
    }
}

/// Fits a forest on `rows` with class labels `0..n_classes`.
pub fn train_forest(
    rows: &[&[Option<f64>]],
    labels: &[usize],
    n_classes: usize,
    params: &ForestParams,
) -> Result<ForestModel, AuditError> {
    if rows.len() != labels.len() {
        return Err(AuditError::ShapeMismatch { expected: labels.len(), got: rows.len() });
    }
    let Some(first) = rows.first() else {
        return Err(AuditError::TooFewRows("<training set>".into()));
    };
    let p = first.len();
    if let Some(r) = rows.iter().find(|r| r.len() != p) {
        return Err(AuditError::ShapeMismatch { expected: p, got: r.len() });
    }
    if labels.iter().any(|&c| c >= n_classes) {
        return Err(AuditError::MissingClass(n_classes));
    }
    if labels.iter().all(|&c| c == labels[0]) {
        return Err(AuditError::SingleClassTraining);
    }
    // a feature with no observed training value is filled with 0
    let fill: Vec<f64> = (0..p)
        .map(|j| {
            let col: Vec<f64> = rows.iter().filter_map(|r| r[j]).collect();
            median(&col).unwrap_or(0.0)
        })
        .collect();
    let x = impute(rows, &fill);
    let n = x.len();
    let mtry = params.mtry.unwrap_or(((p as f64).sqrt().floor() as usize).max(1)).clamp(1, p.max(1));
    let min_leaf = params.min_leaf.max(1);
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = unit_rng(params.seed, STREAM_TREE, t as u64);
            let boot: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut g = Grower {
                x: &x,
                y: labels,
                n_classes,
                mtry,
                min_leaf,
                nodes: Vec::new(),
                rng,
                pairs: Vec::with_capacity(n),
                left: Vec::new(),
                right: Vec::new(),
            };
            g.grow(boot);
            Tree { nodes: g.nodes }
        })
        .collect();
    Ok(ForestModel { trees, n_classes, fill })
}

/// Fraction of trees voting for each class.
pub fn predict_proba(model: &ForestModel, rows: &[&[Option<f64>]]) -> Result<Vec<Vec<f64>>, AuditError> {
    let p = model.fill.len();
    if let Some(r) = rows.iter().find(|r| r.len() != p) {
        return Err(AuditError::ShapeMismatch { expected: p, got: r.len() });
    }
    let x = impute(rows, &model.fill);
    let n_trees = model.trees.len() as f64;
    Ok(x.iter()
        .map(|row| {
            let mut votes = vec![0usize; model.n_classes];
            for t in &model.trees {
                votes[t.predict(row)] += 1;
            }
            votes.into_iter().map(|v| v as f64 / n_trees).collect()
        })
        .collect())
}
