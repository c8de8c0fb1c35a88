//! The three-level model tree: a model root, module nodes, and ML-primitive
//! leaves. Each parent covers the computation of all of its children; child
//! order is kept as given but carries no execution-order meaning.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Node name → joules, complete over a tree.
pub type PredictionMap = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Model,
    Module,
    Ml,
}

/// Evaluation level of a node. Mirrors [`NodeKind`] one to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Ml,
    Module,
    Model,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Ml, Level::Module, Level::Model];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Ml => "ml",
            Level::Module => "module",
            Level::Model => "model",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ml" => Ok(Level::Ml),
            "module" => Ok(Level::Module),
            "model" => Ok(Level::Model),
            other => Err(Error::InvalidInput(format!("unknown level `{other}`"))),
        }
    }
}

impl From<NodeKind> for Level {
    fn from(k: NodeKind) -> Self {
        match k {
            NodeKind::Model => Level::Model,
            NodeKind::Module => Level::Module,
            NodeKind::Ml => Level::Ml,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primitive: Option<String>,
    /// Architecture class with the `:index` suffix stripped, e.g. `BertLayer`.
    #[serde(default)]
    pub type_name: String,
    pub features: FeatureVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_energy: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<Node>,
}

/// Strips a trailing `:index` from a node name.
pub fn type_name_of(name: &str) -> &str {
    match name.rsplit_once(':') {
        Some((head, idx)) if !idx.is_empty() && idx.bytes().all(|b| b.is_ascii_digit()) => head,
        _ => name,
    }
}

impl Node {
    pub fn leaf(name: impl Into<String>, primitive: impl Into<String>, features: FeatureVector) -> Self {
        let name = name.into();
        Self {
            type_name: type_name_of(&name).to_string(),
            name,
            kind: NodeKind::Ml,
            primitive: Some(primitive.into()),
            features,
            ground_truth_energy: None,
            children: Vec::new(),
        }
    }

    pub fn internal(name: impl Into<String>, kind: NodeKind, features: FeatureVector, children: Vec<Node>) -> Self {
        let name = name.into();
        Self {
            type_name: type_name_of(&name).to_string(),
            name,
            kind,
            primitive: None,
            features,
            ground_truth_energy: None,
            children,
        }
    }

    pub fn level(&self) -> Level {
        self.kind.into()
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Pre-order, children in stored order.
    pub fn iter(&self) -> impl Iterator<Item = &Node> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let n = stack.pop()?;
            stack.extend(n.children.iter().rev());
            Some(n)
        })
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(Node::depth).max().unwrap_or(0)
    }

    fn fill_type_names(&mut self) {
        if self.type_name.is_empty() {
            self.type_name = type_name_of(&self.name).to_string();
        }
        for c in &mut self.children {
            c.fill_type_names();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelTree {
    pub model_name: String,
    pub batch_size: u32,
    pub seq_len: u32,
    pub root: Node,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTree {
    model_name: String,
    batch_size: i64,
    seq_len: i64,
    root: Node,
}

impl ModelTree {
    /// Parses a tree document and rejects structural errors. Softer invariant
    /// violations (ranges, ground-truth positivity, input-size agreement) are
    /// left to [`ModelTree::validate`].
    pub fn from_json(doc: &str) -> Result<Self> {
        let raw: RawTree = serde_json::from_str(doc).map_err(|e| Error::Malformed(e.to_string()))?;
        let batch_size = positive_u32("batch_size", raw.batch_size)?;
        let seq_len = positive_u32("seq_len", raw.seq_len)?;
        let mut root = raw.root;
        root.fill_type_names();

        let mut seen = HashSet::new();
        for n in root.iter() {
            if !seen.insert(n.name.as_str()) {
                return Err(Error::DuplicateName(n.name.clone()));
            }
            match n.kind {
                NodeKind::Ml if n.primitive.is_none() => {
                    return Err(Error::InvalidTree(format!("leaf `{}` has no primitive", n.name)))
                }
                NodeKind::Ml if !n.children.is_empty() => {
                    return Err(Error::InvalidTree(format!("ml node `{}` has children", n.name)))
                }
                NodeKind::Model | NodeKind::Module if n.children.is_empty() => {
                    return Err(Error::InvalidTree(format!("internal node `{}` has no children", n.name)))
                }
                _ => {}
            }
        }
        Ok(Self { model_name: raw.model_name, batch_size, seq_len, root })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    /// Stable identifier `model_b{batch}_s{seq}`, also used as the file stem.
    pub fn key(&self) -> String {
        format!("{}_b{}_s{}", self.model_name, self.batch_size, self.seq_len)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Node> {
        self.root.iter()
    }

    pub fn node_count(&self) -> usize {
        self.iter().count()
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn find(&self, name: &str) -> Option<&Node> {
        self.iter().find(|n| n.name == name)
    }

    /// Nodes of one level in depth-first order. `Model` yields the root only;
    /// `Module` yields internal non-root nodes.
    pub fn nodes_at_level(&self, level: Level) -> Vec<&Node> {
        match level {
            Level::Model => vec![&self.root],
            Level::Ml => self.iter().filter(|n| n.is_leaf()).collect(),
            Level::Module => self
                .iter()
                .skip(1)
                .filter(|n| !n.is_leaf())
                .collect(),
        }
    }

    /// Every invariant violation, one message each. Empty means valid.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.root.kind != NodeKind::Model {
            out.push(format!("root `{}` must have kind model", self.root.name));
        }
        if self.depth() < 2 {
            out.push("tree must contain at least one leaf below the root".to_string());
        }
        if self.batch_size == 0 {
            out.push("batch_size must be positive".to_string());
        }
        if self.seq_len == 0 {
            out.push("seq_len must be positive".to_string());
        }
        let mut seen = HashSet::new();
        for (i, n) in self.iter().enumerate() {
            if !seen.insert(n.name.as_str()) {
                out.push(format!("duplicate node name `{}`", n.name));
            }
            if i > 0 && n.kind == NodeKind::Model {
                out.push(format!("node `{}` has kind model but is not the root", n.name));
            }
            let is_ml = n.kind == NodeKind::Ml;
            if is_ml != n.children.is_empty() {
                out.push(format!(
                    "node `{}`: kind {:?} inconsistent with {} children",
                    n.name,
                    n.kind,
                    n.children.len()
                ));
            }
            if is_ml != n.primitive.is_some() {
                out.push(format!("node `{}`: primitive must be present exactly on ml nodes", n.name));
            }
            if let Some(g) = n.ground_truth_energy {
                if !(g.is_finite() && g > 0.0) {
                    out.push(format!("node `{}`: ground_truth_energy must be positive, got {g}", n.name));
                }
            }
            for v in n.features.violations() {
                out.push(format!("node `{}`: {v}", n.name));
            }
            if n.features.batch_size != f64::from(self.batch_size) {
                out.push(format!(
                    "node `{}`: batch_size feature {} differs from tree input size {}",
                    n.name, n.features.batch_size, self.batch_size
                ));
            }
            if n.features.seq_len != f64::from(self.seq_len) {
                out.push(format!(
                    "node `{}`: seq_len feature {} differs from tree input size {}",
                    n.name, n.features.seq_len, self.seq_len
                ));
            }
        }
        out
    }

    /// Ground truth of every node, or the first node lacking one.
    pub fn ground_truth(&self) -> Result<PredictionMap> {
        self.iter()
            .map(|n| {
                n.ground_truth_energy
                    .map(|g| (n.name.clone(), g))
                    .ok_or_else(|| Error::MissingGroundTruth(n.name.clone()))
            })
            .collect()
    }

    /// Indented rendering: the root in joules, every other node as a share of
    /// the root prediction. Shares are not forced to sum to 100.
    pub fn render_annotated(&self, predictions: &PredictionMap) -> Result<String> {
        let root_j = lookup(predictions, &self.root.name)?;
        let mut out = String::new();
        let mut stack = vec![(&self.root, 0usize)];
        while let Some((n, depth)) = stack.pop() {
            let j = lookup(predictions, &n.name)?;
            let indent = "  ".repeat(depth);
            let label = match &n.primitive {
                Some(p) if *p != n.type_name => format!("{} [{p}]", n.name),
                _ => n.name.clone(),
            };
            if depth == 0 {
                writeln!(out, "{indent}{label}: {j:.3} J").unwrap();
            } else {
                writeln!(out, "{indent}{label}: {:.1}%", 100.0 * j / root_j).unwrap();
            }
            stack.extend(n.children.iter().rev().map(|c| (c, depth + 1)));
        }
        Ok(out)
    }
}

fn lookup(p: &PredictionMap, name: &str) -> Result<f64> {
    p.get(name).copied().ok_or_else(|| Error::MissingPrediction(name.to_string()))
}

fn positive_u32(field: &str, v: i64) -> Result<u32> {
    u32::try_from(v)
        .ok()
        .filter(|&v| v > 0)
        .ok_or_else(|| Error::InvalidTree(format!("{field} must be a positive integer, got {v}")))
}
