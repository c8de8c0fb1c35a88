//! One linear energy regressor per ML primitive.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::features::{FeatureSubset, FeatureVector, Normalizer};
use crate::linalg::{dot, fit_linear};
use crate::tree::{ModelTree, Node, NodeKind, PredictionMap};

/// Primitive names observed in Transformer inference graphs. Any other string
/// is accepted too and trains its own regressor.
pub const KNOWN_PRIMITIVES: [&str; 17] = [
    "Linear",
    "LayerNorm",
    "Embedding",
    "BatchNorm1d",
    "Conv1d",
    "MaxPool1d",
    "AvgPool1d",
    "LSTM",
    "Tanh",
    "Conv1D",
    "LogSigmoid",
    "ReLU",
    "Sigmoid",
    "GELU",
    "LeakyReLU",
    "MatMul",
    "Softmax",
];

/// `w · normalize(x) + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRegressor {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub normalizer: Normalizer,
}

impl LinearRegressor {
    pub fn fit(samples: &[(&FeatureVector, f64)], subset: FeatureSubset) -> Result<Self> {
        let normalizer = Normalizer::fit(samples.iter().map(|(f, _)| *f), subset)?;
        let x: Vec<Vec<f64>> = samples.iter().map(|(f, _)| normalizer.apply(f)).collect();
        let y: Vec<f64> = samples.iter().map(|(_, e)| *e).collect();
        let (weights, bias) = fit_linear(&x, &y)?;
        Ok(Self { weights, bias, normalizer })
    }

    pub fn predict(&self, f: &FeatureVector) -> f64 {
        dot(&self.weights, &self.normalizer.apply(f)) + self.bias
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafOptions {
    pub subset: FeatureSubset,
    /// Also fit one pooled regressor over every leaf for unseen primitives.
    pub fallback_generic: bool,
    /// Lower clamp on predictions. `None` reports raw values.
    pub floor: Option<f64>,
}

impl Default for LeafOptions {
    fn default() -> Self {
        Self { subset: FeatureSubset::All, fallback_generic: false, floor: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveRegressorSet {
    pub subset: FeatureSubset,
    pub regressors: BTreeMap<String, LinearRegressor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generic: Option<LinearRegressor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
}

impl PrimitiveRegressorSet {
    /// Fits each primitive by closed-form least squares on every labelled leaf
    /// of `trees`. Leaves are visited in a canonical order so the result does
    /// not depend on the order of `trees`.
    pub fn train(trees: &[ModelTree], opts: LeafOptions) -> Result<Self> {
        let mut leaves: Vec<(String, &Node)> = Vec::new();
        for t in trees {
            let key = t.key();
            for n in t.iter().filter(|n| n.kind == NodeKind::Ml) {
                leaves.push((format!("{key}/{}", n.name), n));
            }
        }
        leaves.sort_by(|a, b| a.0.cmp(&b.0));

        let mut by_prim: BTreeMap<&str, Vec<(&FeatureVector, f64)>> = BTreeMap::new();
        let mut pooled = Vec::new();
        for (_, n) in &leaves {
            let g = n.ground_truth_energy.ok_or_else(|| Error::MissingGroundTruth(n.name.clone()))?;
            let prim = n.primitive.as_deref().ok_or_else(|| Error::InvalidTree(format!("leaf `{}` has no primitive", n.name)))?;
            by_prim.entry(prim).or_default().push((&n.features, g));
            pooled.push((&n.features, g));
        }
        if pooled.is_empty() {
            return Err(Error::Empty("training leaves"));
        }

        let regressors = by_prim
            .into_iter()
            .map(|(p, s)| Ok((p.to_string(), LinearRegressor::fit(&s, opts.subset)?)))
            .collect::<Result<_>>()?;
        let generic = if opts.fallback_generic {
            Some(LinearRegressor::fit(&pooled, opts.subset)?)
        } else {
            None
        };
        Ok(Self { subset: opts.subset, regressors, generic, floor: opts.floor })
    }

    pub fn vocabulary(&self) -> Vec<&str> {
        self.regressors.keys().map(String::as_str).collect()
    }

    pub fn predict_leaf(&self, node: &Node) -> Result<f64> {
        if node.kind != NodeKind::Ml {
            return Err(Error::InvalidInput(format!("`{}` is not an ml node", node.name)));
        }
        let prim = node.primitive.as_deref().unwrap_or_default();
        let reg = self
            .regressors
            .get(prim)
            .or(self.generic.as_ref())
            .ok_or_else(|| Error::UnknownPrimitive(prim.to_string()))?;
        let e = reg.predict(&node.features);
        Ok(match self.floor {
            Some(f) => e.max(f),
            None => e,
        })
    }

    /// Predictions for every leaf of `tree`.
    pub fn predict_leaves(&self, tree: &ModelTree) -> Result<PredictionMap> {
        tree.iter()
            .filter(|n| n.kind == NodeKind::Ml)
            .map(|n| Ok((n.name.clone(), self.predict_leaf(n)?)))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("regressor set serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(s)?;
        let generic = set.generic.iter().map(|g| ("<generic>", g));
        for (p, r) in set.regressors.iter().map(|(p, r)| (p.as_str(), r)).chain(generic) {
            if r.weights.len() != set.subset.len() || r.normalizer.dim() != set.subset.len() {
                return Err(Error::Malformed(format!("regressor `{p}` has the wrong dimension")));
            }
        }
        Ok(set)
    }
}
