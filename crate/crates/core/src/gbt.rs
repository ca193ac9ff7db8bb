//! Gradient-boosted regression trees, built from scratch.
//!
//! Squared-error objective: each round fits one tree to the gradients
//! `g = pred - y` with unit hessians via exact greedy split search. The
//! gain of a split is `½ (G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ))`, leaf
//! weights are `−G/(H+λ)`, and predictions accumulate
//! `base_score + η · Σ trees`. No histogram approximation: candidate
//! thresholds are the midpoints between consecutive distinct feature
//! values, so training is bit-for-bit reproducible.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Initial prediction before any tree is added.
pub const BASE_SCORE: f64 = 0.5;

/// Feature matrix plus regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    /// Column-major feature values.
    columns: Vec<Vec<f64>>,
    target: Vec<f64>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, columns: Vec<Vec<f64>>, target: Vec<f64>) -> Result<Self> {
        if feature_names.len() != columns.len() {
            return Err(Error::Schema(format!(
                "{} feature names but {} columns",
                feature_names.len(),
                columns.len()
            )));
        }
        if feature_names.is_empty() {
            return Err(Error::Schema("dataset needs at least one feature".into()));
        }
        for (i, a) in feature_names.iter().enumerate() {
            if feature_names[i + 1..].contains(a) {
                return Err(Error::Schema(format!("duplicate feature name {a:?}")));
            }
        }
        let n = target.len();
        if n < 2 {
            return Err(Error::Data(format!("dataset needs at least 2 rows, got {n}")));
        }
        for (name, col) in feature_names.iter().zip(&columns) {
            if col.len() != n {
                return Err(Error::Shape(format!(
                    "column {name:?} has {} rows, target has {n}",
                    col.len()
                )));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("column {name:?} has non-finite values")));
            }
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("target has non-finite values".into()));
        }
        Ok(Dataset { feature_names, columns, target })
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.columns[feature][row]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|r| c[*r]).collect())
                .collect(),
            target: rows.iter().map(|r| self.target[*r]).collect(),
        }
    }
}

/// Deterministic train/test partition.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_fraction: 0.7, seed: 0 }
    }
}

/// Shuffle rows with a seeded generator and cut at
/// `floor(train_fraction * n)`. The two parts are disjoint and exhaust the
/// input.
pub fn split_dataset(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction {} must be in (0, 1)",
            spec.train_fraction
        )));
    }
    let n = ds.n_rows();
    if n < 10 {
        return Err(Error::Data(format!("splitting needs at least 10 rows, got {n}")));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    indices.shuffle(&mut rng);
    let n_train = (spec.train_fraction * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Data(format!(
            "train_fraction {} leaves an empty part for n={n}",
            spec.train_fraction
        )));
    }
    Ok((ds.subset(&indices[..n_train]), ds.subset(&indices[n_train..])))
}

/// Boosting hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub reg_lambda: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            rounds: 100,
            learning_rate: 0.1,
            max_depth: 6,
            min_child_weight: 1.0,
            reg_lambda: 1.0,
        }
    }
}

impl Hyperparams {
    fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!(
                "learning_rate {} must be in (0, 1]",
                self.learning_rate
            )));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if !(self.min_child_weight.is_finite() && self.min_child_weight >= 0.0) {
            return Err(Error::Config(format!(
                "min_child_weight {} must be non-negative",
                self.min_child_weight
            )));
        }
        if !(self.reg_lambda.is_finite() && self.reg_lambda >= 0.0) {
            return Err(Error::Config(format!(
                "reg_lambda {} must be non-negative",
                self.reg_lambda
            )));
        }
        Ok(())
    }
}

/// Tree node: axis-aligned split or leaf weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { weight: f64 },
}

/// One regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Raw leaf weight along the decision path; rows go left when the
    /// feature value is strictly below the threshold.
    pub fn leaf_weight(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { weight } => return weight,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[feature] < threshold { left } else { right };
                }
            }
        }
    }
}

/// Trained ensemble with gain-based feature importance.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostedModel {
    pub base_score: f64,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
    /// Total split gain per feature, aligned with `feature_names`.
    pub importance: Vec<f64>,
}

impl BoostedModel {
    /// Model with no trees: predicts the base score everywhere.
    pub fn constant(feature_names: Vec<String>) -> Self {
        let n = feature_names.len();
        BoostedModel {
            base_score: BASE_SCORE,
            learning_rate: 1.0,
            max_depth: 1,
            feature_names,
            trees: Vec::new(),
            importance: vec![0.0; n],
        }
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.feature_names.len() {
            return Err(Error::Schema(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.feature_names.len()
            )));
        }
        let sum: f64 = self.trees.iter().map(|t| t.leaf_weight(row)).sum();
        Ok(self.base_score + self.learning_rate * sum)
    }

    /// `(feature, total gain)` sorted by descending gain, ties by name.
    pub fn feature_importance(&self) -> Vec<(String, f64)> {
        let mut pairs: Vec<(String, f64)> = self
            .feature_names
            .iter()
            .cloned()
            .zip(self.importance.iter().copied())
            .collect();
        pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        pairs
    }
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct TreeBuilder<'a> {
    ds: &'a Dataset,
    grad: &'a [f64],
    params: &'a Hyperparams,
    nodes: Vec<Node>,
    importance: Vec<f64>,
}

impl<'a> TreeBuilder<'a> {
    fn leaf_weight(&self, sum_g: f64, count: f64) -> f64 {
        -sum_g / (count + self.params.reg_lambda)
    }

    /// Exact greedy search over every feature and every midpoint between
    /// consecutive distinct values. Ties in gain keep the first candidate,
    /// i.e. the lower feature index, then the lower threshold.
    fn best_split(&self, rows: &[usize]) -> Option<BestSplit> {
        let lambda = self.params.reg_lambda;
        let total_g: f64 = rows.iter().map(|r| self.grad[*r]).sum();
        let total_h = rows.len() as f64;
        let parent_score = total_g * total_g / (total_h + lambda);
        let mut best: Option<BestSplit> = None;
        for feature in 0..self.ds.feature_names.len() {
            let mut pairs: Vec<(f64, f64)> =
                rows.iter().map(|r| (self.ds.value(*r, feature), self.grad[*r])).collect();
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let mut left_g = 0.0;
            let mut left_h = 0.0;
            for i in 0..pairs.len() - 1 {
                left_g += pairs[i].1;
                left_h += 1.0;
                let (v0, v1) = (pairs[i].0, pairs[i + 1].0);
                if v0 == v1 {
                    continue;
                }
                let threshold = (v0 + v1) / 2.0;
                // guard against midpoint rounding onto a sample value
                if !(v0 < threshold && threshold <= v1) {
                    continue;
                }
                let right_g = total_g - left_g;
                let right_h = total_h - left_h;
                if left_h < self.params.min_child_weight
                    || right_h < self.params.min_child_weight
                {
                    continue;
                }
                let gain = 0.5
                    * (left_g * left_g / (left_h + lambda)
                        + right_g * right_g / (right_h + lambda)
                        - parent_score);
                if gain > best.as_ref().map_or(0.0, |b| b.gain) {
                    best = Some(BestSplit { feature, threshold, gain });
                }
            }
        }
        best
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let sum_g: f64 = rows.iter().map(|r| self.grad[*r]).sum();
        let count = rows.len() as f64;
        if depth >= self.params.max_depth || rows.len() < 2 {
            self.nodes.push(Node::Leaf { weight: self.leaf_weight(sum_g, count) });
            return self.nodes.len() - 1;
        }
        let Some(split) = self.best_split(&rows) else {
            self.nodes.push(Node::Leaf { weight: self.leaf_weight(sum_g, count) });
            return self.nodes.len() - 1;
        };
        self.importance[split.feature] += split.gain;
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|r| self.ds.value(*r, split.feature) < split.threshold);
        let at = self.nodes.len();
        self.nodes.push(Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: 0,
            right: 0,
        });
        let left = self.build(left_rows, depth + 1);
        let right = self.build(right_rows, depth + 1);
        if let Node::Split { left: l, right: r, .. } = &mut self.nodes[at] {
            *l = left;
            *r = right;
        }
        at
    }
}

/// Train a boosted ensemble on `ds`.
pub fn train(ds: &Dataset, params: &Hyperparams) -> Result<BoostedModel> {
    params.validate()?;
    let n = ds.n_rows();
    let mut preds = vec![BASE_SCORE; n];
    let mut trees = Vec::with_capacity(params.rounds);
    let mut importance = vec![0.0; ds.feature_names.len()];
    for _ in 0..params.rounds {
        let grad: Vec<f64> = preds.iter().zip(ds.target()).map(|(p, y)| p - y).collect();
        let mut builder = TreeBuilder {
            ds,
            grad: &grad,
            params,
            nodes: Vec::new(),
            importance: vec![0.0; ds.feature_names.len()],
        };
        builder.build((0..n).collect(), 0);
        let tree = Tree { nodes: builder.nodes };
        for (acc, g) in importance.iter_mut().zip(&builder.importance) {
            *acc += g;
        }
        for (i, p) in preds.iter_mut().enumerate() {
            *p += params.learning_rate * tree.leaf_weight(&ds.row(i));
        }
        trees.push(tree);
    }
    Ok(BoostedModel {
        base_score: BASE_SCORE,
        learning_rate: params.learning_rate,
        max_depth: params.max_depth,
        feature_names: ds.feature_names.clone(),
        trees,
        importance,
    })
}

/// RMSE of model predictions over a test set.
pub fn evaluate(model: &BoostedModel, test: &Dataset) -> Result<f64> {
    if test.n_rows() == 0 {
        return Err(Error::Data("empty test set".into()));
    }
    if test.feature_names != model.feature_names {
        return Err(Error::Schema(format!(
            "test features {:?} do not match model features {:?}",
            test.feature_names, model.feature_names
        )));
    }
    let preds: Vec<f64> = (0..test.n_rows())
        .map(|i| model.predict(&test.row(i)))
        .collect::<Result<_>>()?;
    crate::depthmetrics::rmse(&preds, test.target())
}

// ---------------------------------------------------------------------------
// Persistence: structured text, bit-exact round trip
// ---------------------------------------------------------------------------

pub fn serialize_model(model: &BoostedModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "base_score={}", model.base_score);
    let _ = writeln!(out, "learning_rate={}", model.learning_rate);
    let _ = writeln!(out, "max_depth={}", model.max_depth);
    let _ = writeln!(out, "features={}", model.feature_names.join(","));
    let _ = writeln!(out, "num_trees={}", model.trees.len());
    for (i, tree) in model.trees.iter().enumerate() {
        let _ = writeln!(out, "tree={i}");
        for (id, node) in tree.nodes.iter().enumerate() {
            match node {
                Node::Split { feature, threshold, left, right } => {
                    let _ = writeln!(out, "node,{id},{feature},{threshold},{left},{right},");
                }
                Node::Leaf { weight } => {
                    let _ = writeln!(out, "node,{id},,,,,{weight}");
                }
            }
        }
    }
    for (name, gain) in model.feature_names.iter().zip(&model.importance) {
        let _ = writeln!(out, "importance,{name},{gain}");
    }
    out
}

pub fn parse_model(text: &str) -> Result<BoostedModel> {
    let mut lines = text.lines().enumerate().peekable();
    let mut expect_kv = |key: &str| -> Result<String> {
        let (i, line) = lines
            .next()
            .ok_or_else(|| Error::Format(format!("model file ended before {key}")))?;
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected {key}=...", i + 1)))?;
        if k != key {
            return Err(Error::Format(format!("line {}: expected key {key}, got {k}", i + 1)));
        }
        Ok(v.to_string())
    };
    let base_score: f64 = expect_kv("base_score")?
        .parse()
        .map_err(|_| Error::Format("bad base_score".into()))?;
    let learning_rate: f64 = expect_kv("learning_rate")?
        .parse()
        .map_err(|_| Error::Format("bad learning_rate".into()))?;
    let max_depth: usize = expect_kv("max_depth")?
        .parse()
        .map_err(|_| Error::Format("bad max_depth".into()))?;
    let feature_names: Vec<String> =
        expect_kv("features")?.split(',').map(str::to_string).collect();
    let num_trees: usize = expect_kv("num_trees")?
        .parse()
        .map_err(|_| Error::Format("bad num_trees".into()))?;

    let mut trees = Vec::with_capacity(num_trees);
    let mut importance = Vec::new();
    let mut current: Option<Vec<Node>> = None;
    for (i, line) in lines {
        let lineno = i + 1;
        if let Some(rest) = line.strip_prefix("tree=") {
            let idx: usize = rest
                .parse()
                .map_err(|_| Error::Format(format!("line {lineno}: bad tree index")))?;
            if let Some(nodes) = current.take() {
                trees.push(Tree { nodes });
            }
            if idx != trees.len() {
                return Err(Error::Format(format!(
                    "line {lineno}: tree {idx} out of order (expected {})",
                    trees.len()
                )));
            }
            current = Some(Vec::new());
        } else if let Some(rest) = line.strip_prefix("node,") {
            let nodes = current
                .as_mut()
                .ok_or_else(|| Error::Format(format!("line {lineno}: node outside a tree")))?;
            let fields: Vec<&str> = rest.split(',').collect();
            if fields.len() != 6 {
                return Err(Error::Format(format!(
                    "line {lineno}: node rows need 6 fields, got {}",
                    fields.len()
                )));
            }
            let id: usize = fields[0]
                .parse()
                .map_err(|_| Error::Format(format!("line {lineno}: bad node id")))?;
            if id != nodes.len() {
                return Err(Error::Format(format!(
                    "line {lineno}: node {id} out of order (expected {})",
                    nodes.len()
                )));
            }
            let node = if fields[1].is_empty() {
                let weight: f64 = fields[5]
                    .parse()
                    .map_err(|_| Error::Format(format!("line {lineno}: bad leaf weight")))?;
                Node::Leaf { weight }
            } else {
                let feature: usize = fields[1]
                    .parse()
                    .map_err(|_| Error::Format(format!("line {lineno}: bad feature index")))?;
                if feature >= feature_names.len() {
                    return Err(Error::Schema(format!(
                        "line {lineno}: feature index {feature} out of range"
                    )));
                }
                let threshold: f64 = fields[2]
                    .parse()
                    .map_err(|_| Error::Format(format!("line {lineno}: bad threshold")))?;
                let left: usize = fields[3]
                    .parse()
                    .map_err(|_| Error::Format(format!("line {lineno}: bad left child")))?;
                let right: usize = fields[4]
                    .parse()
                    .map_err(|_| Error::Format(format!("line {lineno}: bad right child")))?;
                Node::Split { feature, threshold, left, right }
            };
            nodes.push(node);
        } else if let Some(rest) = line.strip_prefix("importance,") {
            if let Some(nodes) = current.take() {
                trees.push(Tree { nodes });
            }
            let (name, gain) = rest
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("line {lineno}: bad importance row")))?;
            let idx = importance.len();
            if feature_names.get(idx).map(String::as_str) != Some(name) {
                return Err(Error::Format(format!(
                    "line {lineno}: importance rows must follow feature order"
                )));
            }
            importance.push(
                gain.parse::<f64>()
                    .map_err(|_| Error::Format(format!("line {lineno}: bad gain")))?,
            );
        } else {
            return Err(Error::Format(format!("line {lineno}: unrecognized row {line:?}")));
        }
    }
    if let Some(nodes) = current.take() {
        trees.push(Tree { nodes });
    }
    if trees.len() != num_trees {
        return Err(Error::Format(format!(
            "expected {num_trees} trees, found {}",
            trees.len()
        )));
    }
    if importance.len() != feature_names.len() {
        return Err(Error::Format(format!(
            "expected {} importance rows, found {}",
            feature_names.len(),
            importance.len()
        )));
    }
    Ok(BoostedModel { base_score, learning_rate, max_depth, feature_names, trees, importance })
}

pub fn write_model(path: &std::path::Path, model: &BoostedModel) -> Result<()> {
    std::fs::write(path, serialize_model(model))?;
    Ok(())
}

pub fn read_model(path: &std::path::Path) -> Result<BoostedModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_model(&text)
}
