use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use super::LabeledDataset;
use crate::rng::{stream, stream_id};

const TREE_STREAM: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Hyperparameters {
    pub trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self { trees: 100, max_depth: Some(8), min_leaf: 1 }
    }
}

/// Default tuning grid: trees x max depth x min leaf.
pub fn default_grid() -> Vec<Hyperparameters> {
    let mut g = Vec::new();
    for trees in [100, 300] {
        for max_depth in [Some(8), Some(16), None] {
            for min_leaf in [1, 5] {
                g.push(Hyperparameters { trees, max_depth, min_leaf });
            }
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Weighted impurity decrease of the split.
        gain: f64,
    },
    Leaf {
        /// Fraction of positive training samples.
        score: f64,
    },
}

/// Axis-aligned binary tree; node 0 is the root. Samples with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { score } => return score,
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    i = if x[feature] <= threshold { left } else { right }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub feature_names: Vec<String>,
    pub groups: Vec<String>,
    pub seed: u64,
    pub hyper: Hyperparameters,
}

fn gini(pos: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let p = pos / n;
    2.0 * p * (1.0 - p)
}

struct Builder<'a> {
    cols: &'a [Vec<f64>],
    y: &'a [bool],
    hyper: Hyperparameters,
    mtry: usize,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let pos = idx.iter().filter(|&&i| self.y[i]).count() as f64;
        self.nodes.push(TreeNode::Leaf { score: pos / idx.len().max(1) as f64 });
        self.nodes.len() - 1
    }

    /// Best `(feature, threshold, gain)` among a random feature subset.
    fn best_split(&self, idx: &[usize], rng: &mut impl Rng) -> Option<(usize, f64, f64)> {
        let n = idx.len() as f64;
        let pos = idx.iter().filter(|&&i| self.y[i]).count() as f64;
        let parent = n * gini(pos, n);
        let min_leaf = self.hyper.min_leaf.max(1);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut pairs: Vec<(f64, bool)> = Vec::with_capacity(idx.len());
        for f in sample(rng, self.cols.len(), self.mtry) {
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (self.cols[f][i], self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_n = 0.0;
            let mut left_pos = 0.0;
            for k in 0..pairs.len() - 1 {
                left_n += 1.0;
                if pairs[k].1 {
                    left_pos += 1.0;
                }
                if pairs[k].0 == pairs[k + 1].0 || (k + 1) < min_leaf || pairs.len() - (k + 1) < min_leaf {
                    continue;
                }
                let right_n = n - left_n;
                let gain = parent - left_n * gini(left_pos, left_n) - right_n * gini(pos - left_pos, right_n);
                if gain > 1e-12 && best.is_none_or(|b| gain > b.2) {
                    best = Some((f, 0.5 * (pairs[k].0 + pairs[k + 1].0), gain));
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut impl Rng) -> usize {
        let pos = idx.iter().filter(|&&i| self.y[i]).count();
        let stop = pos == 0
            || pos == idx.len()
            || idx.len() < 2 * self.hyper.min_leaf.max(1)
            || self.hyper.max_depth.is_some_and(|d| depth >= d);
        if stop {
            return self.leaf(&idx);
        }
        let Some((feature, threshold, gain)) = self.best_split(&idx, rng) else {
            return self.leaf(&idx);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.cols[feature][i] <= threshold);
        let me = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { score: 0.0 });
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[me] = TreeNode::Split { feature, threshold, left, right, gain };
        me
    }
}

/// Bootstrap-aggregated Gini trees. Tree `k` draws from its own stream of
/// `seed`, so the forest does not depend on the thread count.
pub fn train_forest(train: &LabeledDataset, hyper: Hyperparameters, seed: u64) -> ForestModel {
    let p = train.n_features();
    let n = train.rows();
    let cols: Vec<Vec<f64>> = (0..p).map(|j| (0..n).map(|i| train.x[i * p + j]).collect()).collect();
    let mtry = ((p as f64).sqrt().ceil() as usize).clamp(1, p.max(1));
    let trees = (0..hyper.trees)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, stream_id(TREE_STREAM, k as u32));
            let mut b = Builder { cols: &cols, y: &train.labels, hyper, mtry, nodes: Vec::new() };
            if n == 0 || p == 0 {
                b.leaf(&[]);
            } else {
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                b.grow(idx, 0, &mut rng);
            }
            Tree { nodes: b.nodes }
        })
        .collect();
    ForestModel {
        trees,
        feature_names: train.feature_names.clone(),
        groups: train.groups.iter().map(|g| g.to_string()).collect(),
        seed,
        hyper,
    }
}

impl ForestModel {
    /// Mean leaf score over trees.
    pub fn predict(&self, x: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return 0.0;
        }
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict_all(&self, data: &LabeledDataset) -> Vec<f64> {
        (0..data.rows()).into_par_iter().map(|i| self.predict(data.row(i))).collect()
    }

    /// Impurity decrease per feature, normalized within each tree, averaged
    /// over trees that split at least once, and normalized to sum to 1.
    pub fn feature_importance(&self) -> Vec<f64> {
        let p = self.feature_names.len();
        let mut total = vec![0.0; p];
        for t in &self.trees {
            let mut imp = vec![0.0; p];
            for node in &t.nodes {
                if let TreeNode::Split { feature, gain, .. } = *node {
                    imp[feature] += gain;
                }
            }
            let s: f64 = imp.iter().sum();
            if s > 0.0 {
                for (a, b) in total.iter_mut().zip(imp) {
                    *a += b / s;
                }
            }
        }
        let s: f64 = total.iter().sum();
        if s > 0.0 {
            total.iter_mut().for_each(|v| *v /= s);
        }
        total
    }

    /// Feature importance summed per group.
    pub fn gini_group_importance(&self) -> BTreeMap<String, f64> {
        let mut out: BTreeMap<String, f64> = self.groups.iter().map(|g| (g.clone(), 0.0)).collect();
        for (g, v) in self.groups.iter().zip(self.feature_importance()) {
            *out.get_mut(g).expect("known group") += v;
        }
        out
    }

    /// Line-oriented text form read back by [`ForestModel::from_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let depth = self.hyper.max_depth.map_or("none".to_string(), |d| d.to_string());
        writeln!(s, "forest 1").unwrap();
        writeln!(s, "seed {}", self.seed).unwrap();
        writeln!(s, "hyper {} {} {}", self.hyper.trees, depth, self.hyper.min_leaf).unwrap();
        writeln!(s, "features {}", self.feature_names.len()).unwrap();
        for (name, group) in self.feature_names.iter().zip(&self.groups) {
            writeln!(s, "feature {name} {group}").unwrap();
        }
        for (k, t) in self.trees.iter().enumerate() {
            writeln!(s, "tree {k} {}", t.nodes.len()).unwrap();
            for node in &t.nodes {
                match *node {
                    TreeNode::Leaf { score } => writeln!(s, "leaf {score}").unwrap(),
                    TreeNode::Split { feature, threshold, left, right, gain } => {
                        writeln!(s, "split {feature} {threshold} {left} {right} {gain}").unwrap()
                    }
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ModelParseError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()));
        fn expect<'t>(
            lines: &mut impl Iterator<Item = (usize, Vec<&'t str>)>,
            expected: &'static str,
        ) -> Result<(usize, Vec<&'t str>), ModelParseError> {
            let (line, parts) = lines.next().ok_or(ModelParseError::Truncated)?;
            if parts.first() != Some(&expected) {
                return Err(ModelParseError::Unexpected { line, expected });
            }
            Ok((line, parts))
        }
        fn num<T: std::str::FromStr>(line: usize, parts: &[&str], k: usize) -> Result<T, ModelParseError> {
            parts.get(k).and_then(|v| v.parse().ok()).ok_or(ModelParseError::BadField { line, field: k })
        }
        let (line, head) = expect(&mut lines, "forest")?;
        if head.get(1) != Some(&"1") {
            return Err(ModelParseError::BadField { line, field: 1 });
        }
        let (line, p) = expect(&mut lines, "seed")?;
        let seed = num(line, &p, 1)?;
        let (line, p) = expect(&mut lines, "hyper")?;
        let max_depth = match p.get(2) {
            Some(&"none") => None,
            _ => Some(num(line, &p, 2)?),
        };
        let hyper = Hyperparameters { trees: num(line, &p, 1)?, max_depth, min_leaf: num(line, &p, 3)? };
        let (line, p) = expect(&mut lines, "features")?;
        let n_features: usize = num(line, &p, 1)?;
        let mut feature_names = Vec::new();
        let mut groups = Vec::new();
        for _ in 0..n_features {
            let (line, p) = expect(&mut lines, "feature")?;
            if p.len() != 3 {
                return Err(ModelParseError::BadField { line, field: 1 });
            }
            feature_names.push(p[1].to_string());
            groups.push(p[2].to_string());
        }
        let mut trees = Vec::new();
        for _ in 0..hyper.trees {
            let (line, p) = expect(&mut lines, "tree")?;
            let count: usize = num(line, &p, 2)?;
            let mut nodes = Vec::with_capacity(count);
            for _ in 0..count {
                let (line, p) = lines.next().ok_or(ModelParseError::Truncated)?;
                let node = match p.first() {
                    Some(&"leaf") => TreeNode::Leaf { score: num(line, &p, 1)? },
                    Some(&"split") => {
                        let feature: usize = num(line, &p, 1)?;
                        let left: usize = num(line, &p, 3)?;
                        let right: usize = num(line, &p, 4)?;
                        if feature >= n_features || left >= count || right >= count {
                            return Err(ModelParseError::BadField { line, field: 1 });
                        }
                        TreeNode::Split { feature, threshold: num(line, &p, 2)?, left, right, gain: num(line, &p, 5)? }
                    }
                    _ => return Err(ModelParseError::Unexpected { line, expected: "leaf or split" }),
                };
                nodes.push(node);
            }
            trees.push(Tree { nodes });
        }
        Ok(ForestModel { trees, feature_names, groups, seed, hyper })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelParseError {
    #[error("model text ends early")]
    Truncated,
    #[error("line {line}: expected {expected}")]
    Unexpected { line: usize, expected: &'static str },
    #[error("line {line}: bad field {field}")]
    BadField { line: usize, field: usize },
}
