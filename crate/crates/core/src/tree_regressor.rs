//! Parent-energy aggregation over a model tree.
//!
//! Every scheme starts from per-leaf predictions. `PredictedSum` adds child
//! predictions; the weighted schemes scale each child by
//! `α(c) = 1 + tanh(W·x̂(c) + b)/τ`, where `x̂` is the normalized feature
//! vector of the child. End2End and StepWise share that recursion and differ
//! only in training. Unstructured ignores the tree and regresses non-leaf
//! energies on their own features.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::{FeatureSubset, FeatureVector, Normalizer};
use crate::leaf::{LinearRegressor, PrimitiveRegressorSet};
use crate::linalg::dot;
use crate::tree::{ModelTree, Node, PredictionMap};

pub const DEFAULT_TAU: f64 = 10.0;
pub const DEFAULT_LEARNING_RATE: f64 = 0.001;
pub const DEFAULT_EPOCHS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorKind {
    #[serde(rename = "end2end")]
    End2End,
    #[serde(rename = "stepwise")]
    StepWise,
    PredictedSum,
    Unstructured,
    Baseline,
}

impl RegressorKind {
    /// The four tree-level aggregation schemes compared in regressor ablations.
    pub const AGGREGATORS: [RegressorKind; 4] =
        [Self::End2End, Self::StepWise, Self::PredictedSum, Self::Unstructured];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::End2End => "end2end",
            Self::StepWise => "stepwise",
            Self::PredictedSum => "predicted_sum",
            Self::Unstructured => "unstructured",
            Self::Baseline => "baseline",
        }
    }
}

impl fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegressorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "end2end" | "end-to-end" => Self::End2End,
            "stepwise" => Self::StepWise,
            "predicted_sum" | "predicted-sum" | "predictedsum" => Self::PredictedSum,
            "unstructured" => Self::Unstructured,
            "baseline" => Self::Baseline,
            other => return Err(Error::InvalidInput(format!("unknown regressor kind `{other}`"))),
        })
    }
}

/// Hyperparameters shared by every trainable aggregator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub tau: f64,
    pub seed: u64,
    pub subset: FeatureSubset,
    /// Stop once the epoch loss improved by less than `min_improvement`
    /// over the last `patience` epochs.
    pub patience: usize,
    pub min_improvement: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: DEFAULT_EPOCHS,
            tau: DEFAULT_TAU,
            seed: 0,
            subset: FeatureSubset::All,
            patience: 20,
            min_improvement: 1e-8,
        }
    }
}

/// The single shared child-weighting regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeRegressorParams {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub tau: f64,
    pub normalizer: Normalizer,
    pub config: TrainConfig,
    /// Epoch whose parameters were kept (0 means the zero initialization).
    #[serde(default)]
    pub best_epoch: usize,
}

impl TreeRegressorParams {
    /// W = 0, b = 0: the weighted sum starts out as a plain sum.
    pub fn zeros(normalizer: Normalizer, config: TrainConfig) -> Self {
        Self {
            weights: vec![0.0; normalizer.dim()],
            bias: 0.0,
            tau: config.tau,
            normalizer,
            config,
            best_epoch: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Parameters flattened as `[W..., b]`.
    pub fn theta(&self) -> Vec<f64> {
        let mut t = self.weights.clone();
        t.push(self.bias);
        t
    }

    pub fn set_theta(&mut self, theta: &[f64]) {
        let d = self.dim();
        self.weights.copy_from_slice(&theta[..d]);
        self.bias = theta[d];
    }

    pub fn alpha(&self, child: &Node) -> f64 {
        alpha_from_logit(self.logit(&self.normalizer.apply(&child.features)), self.tau)
    }

    fn logit(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    fn check(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidInput(format!("tau must be positive, got {}", self.tau)));
        }
        if self.normalizer.dim() != self.weights.len() {
            return Err(Error::InvalidInput("weight dimension does not match normalizer".into()));
        }
        Ok(())
    }
}

/// `1 + tanh(z)/τ`.
pub fn alpha_from_logit(z: f64, tau: f64) -> f64 {
    1.0 + z.tanh() / tau
}

/// Direct linear regression on non-leaf node features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnstructuredParams {
    pub regressor: LinearRegressor,
}

impl UnstructuredParams {
    pub fn train(trees: &[ModelTree], subset: FeatureSubset) -> Result<Self> {
        let mut samples: Vec<(String, &FeatureVector, f64)> = Vec::new();
        for t in trees {
            let key = t.key();
            for n in t.iter().filter(|n| !n.is_leaf()) {
                let g = n.ground_truth_energy.ok_or_else(|| Error::MissingGroundTruth(n.name.clone()))?;
                samples.push((format!("{key}/{}", n.name), &n.features, g));
            }
        }
        samples.sort_by(|a, b| a.0.cmp(&b.0));
        let rows: Vec<(&FeatureVector, f64)> = samples.iter().map(|(_, f, g)| (*f, *g)).collect();
        Ok(Self { regressor: LinearRegressor::fit(&rows, subset)? })
    }

    pub fn predict(&self, node: &Node) -> f64 {
        self.regressor.predict(&node.features)
    }
}

/// A trained (or parameter-free) aggregation scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Aggregator {
    PredictedSum,
    #[serde(rename = "end2end")]
    End2End(TreeRegressorParams),
    #[serde(rename = "stepwise")]
    StepWise(TreeRegressorParams),
    Unstructured(UnstructuredParams),
}

impl Aggregator {
    pub fn kind(&self) -> RegressorKind {
        match self {
            Self::PredictedSum => RegressorKind::PredictedSum,
            Self::End2End(_) => RegressorKind::End2End,
            Self::StepWise(_) => RegressorKind::StepWise,
            Self::Unstructured(_) => RegressorKind::Unstructured,
        }
    }

    /// Trains `kind` on fully labelled trees. Leaf predictions feeding the
    /// End2End recursion come from `leaf_regs`.
    pub fn train(
        kind: RegressorKind,
        trees: &[ModelTree],
        leaf_regs: &PrimitiveRegressorSet,
        config: &TrainConfig,
    ) -> Result<Self> {
        Ok(match kind {
            RegressorKind::PredictedSum => Self::PredictedSum,
            RegressorKind::End2End => Self::End2End(train_end2end(trees, leaf_regs, config)?),
            RegressorKind::StepWise => Self::StepWise(train_stepwise(trees, config)?),
            RegressorKind::Unstructured => Self::Unstructured(UnstructuredParams::train(trees, config.subset)?),
            RegressorKind::Baseline => {
                return Err(Error::InvalidInput("the utilization baseline is not a tree aggregator".into()))
            }
        })
    }

    pub fn predict(&self, tree: &ModelTree, leaf_preds: &PredictionMap) -> Result<PredictionMap> {
        match self {
            Self::PredictedSum => predict_sum(tree, leaf_preds),
            Self::End2End(p) => end2end_predict(p, tree, leaf_preds),
            Self::StepWise(p) => stepwise_predict(p, tree, leaf_preds),
            Self::Unstructured(u) => {
                let mut out = PredictionMap::new();
                for n in tree.iter() {
                    let e = if n.is_leaf() { leaf_of(leaf_preds, n)? } else { u.predict(n) };
                    out.insert(n.name.clone(), e);
                }
                Ok(out)
            }
        }
    }
}

/// On-disk form of a trained aggregator, tied to the leaf regressors it was
/// trained against by the SHA-256 of their serialized file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeRegressorFile {
    pub leaf_regressors_sha256: String,
    pub regressor: Aggregator,
}

impl TreeRegressorFile {
    pub fn new(regressor: Aggregator, leaf_file_contents: &str) -> Self {
        Self { leaf_regressors_sha256: sha256_hex(leaf_file_contents), regressor }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree regressor serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn matches_leaf_file(&self, leaf_file_contents: &str) -> bool {
        self.leaf_regressors_sha256 == sha256_hex(leaf_file_contents)
    }
}

pub fn sha256_hex(s: &str) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(s.as_bytes()))
}

fn leaf_of(leaf_preds: &PredictionMap, n: &Node) -> Result<f64> {
    leaf_preds.get(&n.name).copied().ok_or_else(|| Error::MissingPrediction(n.name.clone()))
}

/// Plain bottom-up sum of leaf predictions.
pub fn predict_sum(tree: &ModelTree, leaf_preds: &PredictionMap) -> Result<PredictionMap> {
    fn walk(n: &Node, leaf_preds: &PredictionMap, out: &mut PredictionMap) -> Result<f64> {
        let e = if n.is_leaf() {
            leaf_of(leaf_preds, n)?
        } else {
            let mut s = 0.0;
            for c in &n.children {
                s += walk(c, leaf_preds, out)?;
            }
            s
        };
        out.insert(n.name.clone(), e);
        Ok(e)
    }
    let mut out = PredictionMap::new();
    walk(&tree.root, leaf_preds, &mut out)?;
    Ok(out)
}

/// Weighted bottom-up recursion `P(n) = Σ α(c)·P(c)`.
pub fn end2end_predict(params: &TreeRegressorParams, tree: &ModelTree, leaf_preds: &PredictionMap) -> Result<PredictionMap> {
    params.check()?;
    let flat = FlatTree::build(tree, &params.normalizer, leaf_preds)?;
    let (p, _) = flat.forward(params, false);
    Ok(flat.names.iter().cloned().zip(p).collect())
}

/// Test-time StepWise prediction: the same recursion as End2End.
pub fn stepwise_predict(params: &TreeRegressorParams, tree: &ModelTree, leaf_preds: &PredictionMap) -> Result<PredictionMap> {
    end2end_predict(params, tree, leaf_preds)
}

/// `Σ_s (P(s) − G(s))² / G(s)²` over the non-leaf nodes of `tree`.
pub fn tree_loss(params: &TreeRegressorParams, tree: &ModelTree, leaf_preds: &PredictionMap) -> Result<f64> {
    Ok(loss_and_gradient(params, tree, leaf_preds)?.0)
}

/// End2End loss and its gradient with respect to `[W..., b]`.
pub fn loss_and_gradient(
    params: &TreeRegressorParams,
    tree: &ModelTree,
    leaf_preds: &PredictionMap,
) -> Result<(f64, Vec<f64>)> {
    params.check()?;
    let flat = FlatTree::build(tree, &params.normalizer, leaf_preds)?.with_ground_truth(tree)?;
    Ok(flat.end2end_loss(params))
}

/// StepWise training loss (children's ground truth in place of predictions)
/// and its gradient.
pub fn stepwise_loss_and_gradient(params: &TreeRegressorParams, tree: &ModelTree) -> Result<(f64, Vec<f64>)> {
    params.check()?;
    let gt = tree.ground_truth()?;
    let flat = FlatTree::build(tree, &params.normalizer, &gt)?.with_ground_truth(tree)?;
    Ok(flat.stepwise_loss(params))
}

/// Flattened pre-order view of a tree with normalized features cached.
/// Children always have larger indices than their parent.
struct FlatTree {
    names: Vec<String>,
    children: Vec<Vec<usize>>,
    x: Vec<Vec<f64>>,
    /// Leaf predictions; for internal nodes, whatever the source map holds
    /// (ground truth when training StepWise), else NaN.
    value: Vec<f64>,
    ground_truth: Vec<f64>,
}

impl FlatTree {
    fn build(tree: &ModelTree, norm: &Normalizer, leaf_preds: &PredictionMap) -> Result<Self> {
        let mut f = FlatTree {
            names: Vec::new(),
            children: Vec::new(),
            x: Vec::new(),
            value: Vec::new(),
            ground_truth: Vec::new(),
        };
        let mut stack: Vec<(&Node, Option<usize>)> = vec![(&tree.root, None)];
        while let Some((n, parent)) = stack.pop() {
            let i = f.names.len();
            f.names.push(n.name.clone());
            f.children.push(Vec::new());
            f.x.push(norm.apply(&n.features));
            f.value.push(if n.is_leaf() {
                leaf_of(leaf_preds, n)?
            } else {
                leaf_preds.get(&n.name).copied().unwrap_or(f64::NAN)
            });
            if let Some(p) = parent {
                f.children[p].push(i);
            }
            stack.extend(n.children.iter().rev().map(|c| (c, Some(i))));
        }
        Ok(f)
    }

    fn with_ground_truth(mut self, tree: &ModelTree) -> Result<Self> {
        self.ground_truth = tree
            .iter()
            .map(|n| {
                if n.is_leaf() {
                    return Ok(f64::NAN);
                }
                match n.ground_truth_energy {
                    Some(g) if g > 0.0 => Ok(g),
                    Some(g) => Err(Error::NonPositiveGroundTruth(g)),
                    None => Err(Error::MissingGroundTruth(n.name.clone())),
                }
            })
            .collect::<Result<_>>()?;
        Ok(self)
    }

    /// α and dα/dθ for node `i`.
    fn alpha_and_grad(&self, params: &TreeRegressorParams, i: usize, grad: bool) -> (f64, Vec<f64>) {
        let t = params.logit(&self.x[i]).tanh();
        let a = 1.0 + t / params.tau;
        if !grad {
            return (a, Vec::new());
        }
        let s = (1.0 - t * t) / params.tau;
        let mut g: Vec<f64> = self.x[i].iter().map(|v| s * v).collect();
        g.push(s);
        (a, g)
    }

    /// Predictions and, optionally, their forward-mode derivatives.
    fn forward(&self, params: &TreeRegressorParams, grad: bool) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.names.len();
        let dim = params.dim() + 1;
        let mut p = vec![0.0; n];
        let mut dp = if grad { vec![vec![0.0; dim]; n] } else { Vec::new() };
        for i in (0..n).rev() {
            if self.children[i].is_empty() {
                p[i] = self.value[i];
                continue;
            }
            let mut acc = 0.0;
            let mut dacc = vec![0.0; if grad { dim } else { 0 }];
            for &c in &self.children[i] {
                let (a, da) = self.alpha_and_grad(params, c, grad);
                acc += a * p[c];
                if grad {
                    for k in 0..dim {
                        dacc[k] += da[k] * p[c] + a * dp[c][k];
                    }
                }
            }
            p[i] = acc;
            if grad {
                dp[i] = dacc;
            }
        }
        (p, dp)
    }

    fn end2end_loss(&self, params: &TreeRegressorParams) -> (f64, Vec<f64>) {
        let (p, dp) = self.forward(params, true);
        let mut loss = 0.0;
        let mut grad = vec![0.0; params.dim() + 1];
        for i in 0..p.len() {
            if self.children[i].is_empty() {
                continue;
            }
            let g = self.ground_truth[i];
            let r = (p[i] - g) / g;
            loss += r * r;
            let scale = 2.0 * r / g;
            for (acc, d) in grad.iter_mut().zip(&dp[i]) {
                *acc += scale * d;
            }
        }
        (loss, grad)
    }

    fn stepwise_loss(&self, params: &TreeRegressorParams) -> (f64, Vec<f64>) {
        let mut loss = 0.0;
        let mut grad = vec![0.0; params.dim() + 1];
        for i in 0..self.names.len() {
            if self.children[i].is_empty() {
                continue;
            }
            let mut pred = 0.0;
            let mut dpred = vec![0.0; grad.len()];
            for &c in &self.children[i] {
                let (a, da) = self.alpha_and_grad(params, c, true);
                pred += a * self.value[c];
                for (acc, d) in dpred.iter_mut().zip(&da) {
                    *acc += d * self.value[c];
                }
            }
            let g = self.ground_truth[i];
            let r = (pred - g) / g;
            loss += r * r;
            let scale = 2.0 * r / g;
            for (acc, d) in grad.iter_mut().zip(&dpred) {
                *acc += scale * d;
            }
        }
        (loss, grad)
    }
}

/// Adam with the usual defaults (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(dim: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            theta[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Normalizer over every node that can act as a child, i.e. all non-root nodes.
fn fit_child_normalizer(trees: &[ModelTree], subset: FeatureSubset) -> Result<Normalizer> {
    let mut rows: Vec<(String, &FeatureVector)> = trees
        .iter()
        .flat_map(|t| {
            let key = t.key();
            t.iter().skip(1).map(move |n| (format!("{key}/{}", n.name), &n.features))
        })
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    Normalizer::fit(rows.into_iter().map(|(_, f)| f), subset)
}

fn canonical_order(trees: &[ModelTree]) -> Vec<&ModelTree> {
    let mut v: Vec<&ModelTree> = trees.iter().collect();
    v.sort_by_key(|t| t.key());
    v
}

/// One Adam step per tree per epoch, trees visited in a seeded shuffle of
/// their canonical order. After every epoch the full training loss is
/// recomputed; the best parameters seen (the starting point included) are
/// returned, and training stops once that best has not improved by
/// `min_improvement` for `patience` epochs.
fn optimize(
    flats: &[FlatTree],
    mut params: TreeRegressorParams,
    loss_fn: impl Fn(&FlatTree, &TreeRegressorParams) -> (f64, Vec<f64>),
) -> Result<TreeRegressorParams> {
    let cfg = params.config;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(params.dim() + 1, cfg.learning_rate);
    let mut theta = params.theta();
    let mut order: Vec<usize> = (0..flats.len()).collect();
    let total_loss = |params: &TreeRegressorParams| flats.iter().map(|f| loss_fn(f, params).0).sum::<f64>();
    let mut best_loss = total_loss(&params);
    let mut best_theta = theta.clone();
    let mut best_epoch = 0;
    let mut stale = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            params.set_theta(&theta);
            let (loss, grad) = loss_fn(&flats[i], &params);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite loss at epoch {epoch} on tree {} (loss {loss})",
                    flats[i].names[0]
                )));
            }
            adam.step(&mut theta, &grad);
        }
        params.set_theta(&theta);
        let loss = total_loss(&params);
        if !loss.is_finite() {
            return Err(Error::Training(format!("non-finite training loss after epoch {epoch}")));
        }
        if loss < best_loss - cfg.min_improvement {
            stale = 0;
        } else {
            stale += 1;
        }
        if loss < best_loss {
            best_loss = loss;
            best_theta.clone_from(&theta);
            best_epoch = epoch + 1;
        }
        if cfg.patience > 0 && stale >= cfg.patience {
            break;
        }
    }
    params.set_theta(&best_theta);
    params.best_epoch = best_epoch;
    Ok(params)
}

fn check_config(config: &TrainConfig) -> Result<()> {
    if !(config.tau > 0.0) {
        return Err(Error::InvalidInput(format!("tau must be positive, got {}", config.tau)));
    }
    if !(config.learning_rate > 0.0) {
        return Err(Error::InvalidInput(format!("learning rate must be positive, got {}", config.learning_rate)));
    }
    Ok(())
}

/// Trains W and b by back-propagating the relative squared error of every
/// non-leaf node through the full recursion, starting from W = 0, b = 0.
pub fn train_end2end(
    trees: &[ModelTree],
    leaf_regs: &PrimitiveRegressorSet,
    config: &TrainConfig,
) -> Result<TreeRegressorParams> {
    check_config(config)?;
    let normalizer = fit_child_normalizer(trees, config.subset)?;
    let flats = canonical_order(trees)
        .into_iter()
        .map(|t| FlatTree::build(t, &normalizer, &leaf_regs.predict_leaves(t)?)?.with_ground_truth(t))
        .collect::<Result<Vec<_>>>()?;
    optimize(&flats, TreeRegressorParams::zeros(normalizer, *config), FlatTree::end2end_loss)
}

/// Trains the same α regressor against children's ground-truth energies,
/// one node at a time, with no recursion.
pub fn train_stepwise(trees: &[ModelTree], config: &TrainConfig) -> Result<TreeRegressorParams> {
    check_config(config)?;
    let normalizer = fit_child_normalizer(trees, config.subset)?;
    let flats = canonical_order(trees)
        .into_iter()
        .map(|t| FlatTree::build(t, &normalizer, &t.ground_truth()?)?.with_ground_truth(t))
        .collect::<Result<Vec<_>>>()?;
    optimize(&flats, TreeRegressorParams::zeros(normalizer, *config), FlatTree::stepwise_loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::NodeKind;

    fn feat(flops: f64) -> FeatureVector {
        FeatureVector { batch_size: 1.0, seq_len: 8.0, flops, ..Default::default() }
    }

    /// Root → Block:0 → {Linear:0, Linear:1}, with the given ground truth.
    fn small_tree(root_gt: f64, block_gt: f64) -> ModelTree {
        let mut block = Node::internal(
            "Block:0",
            NodeKind::Module,
            feat(3.0),
            vec![Node::leaf("Linear:0", "Linear", feat(1.0)), Node::leaf("Linear:1", "Linear", feat(2.0))],
        );
        block.ground_truth_energy = Some(block_gt);
        let mut root = Node::internal("Root", NodeKind::Model, feat(3.0), vec![block]);
        root.ground_truth_energy = Some(root_gt);
        ModelTree { model_name: "m".into(), batch_size: 1, seq_len: 8, root }
    }

    fn leaves(a: f64, b: f64) -> PredictionMap {
        [("Linear:0".to_string(), a), ("Linear:1".to_string(), b)].into_iter().collect()
    }

    fn params_with(w_flops: f64, bias: f64) -> TreeRegressorParams {
        let norm = Normalizer { subset: FeatureSubset::All, mean: vec![0.0; 12], std: vec![1.0; 12] };
        let mut p = TreeRegressorParams::zeros(norm, TrainConfig::default());
        p.weights[2] = w_flops;
        p.bias = bias;
        p
    }

    #[test]
    fn alpha_examples() {
        let p = params_with(0.0, 0.0);
        assert_eq!(p.alpha(&Node::leaf("x", "Linear", feat(5.0))), 1.0);
        assert!((alpha_from_logit(1e6, 10.0) - 1.1).abs() < 1e-12);
        assert!((alpha_from_logit(0.5f64.atanh(), 10.0) - 1.05).abs() < 1e-12);
        assert!((alpha_from_logit(0.5493, 10.0) - 1.05).abs() < 1e-5);
    }

    #[test]
    fn predicted_sum_examples() {
        let t = small_tree(5.0, 5.0);
        let p = predict_sum(&t, &leaves(2.0, 3.0)).unwrap();
        assert_eq!(p["Block:0"], 5.0);
        assert_eq!(p["Root"], 5.0);
        assert_eq!(p["Linear:1"], 3.0);

        let single = ModelTree {
            model_name: "s".into(),
            batch_size: 1,
            seq_len: 8,
            root: Node::internal("R", NodeKind::Model, feat(1.0), vec![Node::leaf("Linear:0", "Linear", feat(1.0))]),
        };
        let one: PredictionMap = [("Linear:0".to_string(), 7.0)].into_iter().collect();
        assert_eq!(predict_sum(&single, &one).unwrap()["R"], 7.0);

        let missing: PredictionMap = [("Linear:0".to_string(), 7.0)].into_iter().collect();
        assert!(matches!(predict_sum(&t, &missing), Err(Error::MissingPrediction(n)) if n == "Linear:1"));
    }

    #[test]
    fn zero_params_match_predicted_sum() {
        let t = small_tree(5.0, 5.0);
        let lp = leaves(2.5, 1.25);
        assert_eq!(end2end_predict(&params_with(0.0, 0.0), &t, &lp).unwrap(), predict_sum(&t, &lp).unwrap());
    }

    #[test]
    fn weighted_sum_arithmetic() {
        // bias = atanh(0.5) gives α = 1.05 for every child
        let p = params_with(0.0, 0.5f64.atanh());
        let t = small_tree(1.0, 1.0);
        let out = end2end_predict(&p, &t, &leaves(2.0, 2.0)).unwrap();
        assert!((out["Block:0"] - 4.2).abs() < 1e-12);
        assert!((out["Root"] - 4.41).abs() < 1e-12);
    }

    #[test]
    fn loss_examples() {
        let zero = params_with(0.0, 0.0);
        let single = {
            let mut r = Node::internal("R", NodeKind::Model, feat(1.0), vec![Node::leaf("Linear:0", "Linear", feat(1.0))]);
            r.ground_truth_energy = Some(1.0);
            ModelTree { model_name: "s".into(), batch_size: 1, seq_len: 8, root: r }
        };
        let lp: PredictionMap = [("Linear:0".to_string(), 2.0)].into_iter().collect();
        assert_eq!(tree_loss(&zero, &single, &lp).unwrap(), 1.0);

        // (P, G) = (3, 2) at the block and (3, 3) at the root
        let t = small_tree(3.0, 2.0);
        assert_eq!(tree_loss(&zero, &t, &leaves(1.0, 2.0)).unwrap(), 0.25);
        // (P, G) = (2, 1) at A:0 and (3, 2) at the root
        let two = {
            let mut a = Node::internal("A:0", NodeKind::Module, feat(1.0), vec![Node::leaf("Linear:0", "Linear", feat(1.0))]);
            a.ground_truth_energy = Some(1.0);
            let mut r = Node::internal("R", NodeKind::Model, feat(1.0), vec![a, Node::leaf("Linear:1", "Linear", feat(1.0))]);
            r.ground_truth_energy = Some(2.0);
            ModelTree { model_name: "t".into(), batch_size: 1, seq_len: 8, root: r }
        };
        assert_eq!(tree_loss(&zero, &two, &leaves(2.0, 1.0)).unwrap(), 1.25);
        let exact = small_tree(3.0, 3.0);
        assert_eq!(tree_loss(&zero, &exact, &leaves(1.0, 2.0)).unwrap(), 0.0);
    }

    #[test]
    fn loss_requires_ground_truth() {
        let mut t = small_tree(3.0, 3.0);
        t.root.ground_truth_energy = None;
        assert!(matches!(
            tree_loss(&params_with(0.0, 0.0), &t, &leaves(1.0, 2.0)),
            Err(Error::MissingGroundTruth(_))
        ));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let t = small_tree(3.7, 3.1);
        let lp = leaves(1.2, 2.1);
        let p = params_with(0.3, -0.2);
        let (_, g) = loss_and_gradient(&p, &t, &lp).unwrap();
        let h = 1e-5;
        for k in 0..g.len() {
            let mut plus = p.clone();
            let mut minus = p.clone();
            let mut th = p.theta();
            th[k] += h;
            plus.set_theta(&th);
            th[k] -= 2.0 * h;
            minus.set_theta(&th);
            let fd = (tree_loss(&plus, &t, &lp).unwrap() - tree_loss(&minus, &t, &lp).unwrap()) / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-6 * fd.abs().max(g[k].abs()).max(1e-3), "k={k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut adam = Adam::new(2, 0.05);
        let mut x = vec![3.0, -2.0];
        for _ in 0..2000 {
            let g = vec![2.0 * (x[0] - 1.0), 2.0 * (x[1] + 0.5)];
            adam.step(&mut x, &g);
        }
        assert!((x[0] - 1.0).abs() < 1e-3 && (x[1] + 0.5).abs() < 1e-3);
    }

    #[test]
    fn kind_round_trips_through_strings() {
        for k in RegressorKind::AGGREGATORS.into_iter().chain([RegressorKind::Baseline]) {
            assert_eq!(k.as_str().parse::<RegressorKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.as_str()));
        }
    }
}
