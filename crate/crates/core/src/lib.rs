//! Interpretable inference-energy prediction over model trees.
//!
//! A model is broken into a three-level tree (model, modules, ML primitives).
//! Leaf energies come from per-primitive linear regressors and are aggregated
//! up the tree by a calibrated weighted sum whose per-child weights are learned
//! end to end.

// Input checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod baseline;
pub mod cli;
pub mod error;
pub mod eval;
pub mod features;
pub mod leaf;
pub mod linalg;
pub mod synthetic;
pub mod tree;
pub mod tree_regressor;

pub use error::{Error, Result};
pub use features::{FeatureSubset, FeatureVector, Normalizer, FEATURE_NAMES};
pub use leaf::PrimitiveRegressorSet;
pub use tree::{Level, ModelTree, Node, NodeKind, PredictionMap};
pub use tree_regressor::{RegressorKind, TrainConfig, TreeRegressorParams, UnstructuredParams};
