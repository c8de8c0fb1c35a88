//! Python bindings for the `enertree` crate.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ::enertree as core;
use core::eval::{EvalConfig, TrainedModel};
use core::synthetic::{generate_dataset, SyntheticSpec};
use core::tree_regressor::TreeRegressorFile;

fn py_err(e: core::Error) -> PyErr {
    match e {
        core::Error::Training(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// A labelled or unlabelled model tree.
#[pyclass(name = "ModelTree", module = "enertree", skip_from_py_object)]
#[derive(Clone)]
struct PyModelTree {
    inner: core::ModelTree,
}

#[pymethods]
impl PyModelTree {
    #[staticmethod]
    fn from_json(doc: &str) -> PyResult<Self> {
        core::ModelTree::from_json(doc).map(|inner| Self { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn from_path(path: &str) -> PyResult<Self> {
        core::ModelTree::from_path(path).map(|inner| Self { inner }).map_err(py_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn model_name(&self) -> &str {
        &self.inner.model_name
    }

    #[getter]
    fn batch_size(&self) -> u32 {
        self.inner.batch_size
    }

    #[getter]
    fn seq_len(&self) -> u32 {
        self.inner.seq_len
    }

    fn key(&self) -> String {
        self.inner.key()
    }

    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    fn depth(&self) -> usize {
        self.inner.depth()
    }

    /// Node names at `level` ("ml", "module" or "model"), depth-first.
    fn nodes_at_level(&self, level: &str) -> PyResult<Vec<String>> {
        let level: core::Level = level.parse().map_err(py_err)?;
        Ok(self.inner.nodes_at_level(level).into_iter().map(|n| n.name.clone()).collect())
    }

    fn validate(&self) -> Vec<String> {
        self.inner.validate()
    }

    fn ground_truth(&self) -> PyResult<BTreeMap<String, f64>> {
        self.inner.ground_truth().map_err(py_err)
    }

    fn render(&self, predictions: BTreeMap<String, f64>) -> PyResult<String> {
        self.inner.render_annotated(&predictions).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("ModelTree('{}', nodes={})", self.inner.key(), self.inner.node_count())
    }
}

/// Leaf regressors plus a tree-level aggregator.
#[pyclass(name = "Model", module = "enertree")]
struct PyModel {
    inner: TrainedModel,
}

fn eval_config(regressor: &str, subset: &str, seed: u64, epochs: usize) -> PyResult<EvalConfig> {
    let kind: core::RegressorKind = regressor.parse().map_err(py_err)?;
    let subset: core::FeatureSubset = subset.parse().map_err(py_err)?;
    let mut cfg = EvalConfig::new(kind, subset, seed);
    cfg.train.epochs = epochs;
    Ok(cfg)
}

fn unwrap_trees(trees: Vec<PyRef<'_, PyModelTree>>) -> Vec<core::ModelTree> {
    trees.iter().map(|t| t.inner.clone()).collect()
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    #[pyo3(signature = (trees, regressor = "end2end", subset = "all", seed = 0, epochs = 500))]
    fn train(trees: Vec<PyRef<'_, PyModelTree>>, regressor: &str, subset: &str, seed: u64, epochs: usize) -> PyResult<Self> {
        let cfg = eval_config(regressor, subset, seed, epochs)?;
        TrainedModel::train(&unwrap_trees(trees), &cfg).map(|inner| Self { inner }).map_err(py_err)
    }

    /// Loads the two files written by `enertree train`.
    #[staticmethod]
    fn from_json(leaf_json: &str, tree_regressor_json: &str) -> PyResult<Self> {
        let leaf = core::PrimitiveRegressorSet::from_json(leaf_json).map_err(py_err)?;
        let file = TreeRegressorFile::from_json(tree_regressor_json).map_err(py_err)?;
        if !file.matches_leaf_file(leaf_json) {
            return Err(PyValueError::new_err("tree regressor was trained against different leaf regressors"));
        }
        Ok(Self { inner: TrainedModel { leaf, aggregator: file.regressor } })
    }

    /// `(leaf_regressors_json, tree_regressor_json)`.
    fn to_json(&self) -> (String, String) {
        let leaf = self.inner.leaf.to_json();
        let tree = TreeRegressorFile::new(self.inner.aggregator.clone(), &leaf).to_json();
        (leaf, tree)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.aggregator.kind().as_str()
    }

    fn predict(&self, tree: &PyModelTree) -> PyResult<BTreeMap<String, f64>> {
        self.inner.predict(&tree.inner).map_err(py_err)
    }
}

/// Generates a synthetic dataset; returns the trees.
#[pyfunction]
#[pyo3(signature = (scenario = "exact", seed = 0, layers = None))]
fn synthesize(scenario: &str, seed: u64, layers: Option<usize>) -> PyResult<Vec<PyModelTree>> {
    let mut spec = SyntheticSpec::scenario(scenario, seed).map_err(py_err)?;
    if let Some(l) = layers {
        spec.models.iter_mut().for_each(|m| m.n_layers = l);
    }
    let data = generate_dataset(&spec).map_err(py_err)?;
    Ok(data.trees.into_iter().map(|inner| PyModelTree { inner }).collect())
}

/// Leave-one-model-out evaluation. Returns mean error percentages per level
/// (averaged over models) and per held-out model.
#[pyfunction]
#[pyo3(signature = (trees, regressor = "end2end", subset = "all", seed = 0, epochs = 500))]
fn evaluate(
    trees: Vec<PyRef<'_, PyModelTree>>,
    regressor: &str,
    subset: &str,
    seed: u64,
    epochs: usize,
) -> PyResult<BTreeMap<String, BTreeMap<String, Option<f64>>>> {
    let cfg = eval_config(regressor, subset, seed, epochs)?;
    let report = core::eval::run_eval(&unwrap_trees(trees), None, &cfg).map_err(py_err)?;
    let levels = |e: &core::eval::LevelErrors| -> BTreeMap<String, Option<f64>> {
        core::Level::ALL.iter().map(|l| (l.as_str().to_string(), e.get(*l))).collect()
    };
    let mut out = BTreeMap::new();
    out.insert("average".to_string(), levels(&report.average_over_models));
    for m in &report.per_model {
        out.insert(m.model_name.clone(), levels(&m.errors));
    }
    Ok(out)
}

#[pyfunction]
fn predict_sum(tree: &PyModelTree, leaf_predictions: BTreeMap<String, f64>) -> PyResult<BTreeMap<String, f64>> {
    core::tree_regressor::predict_sum(&tree.inner, &leaf_predictions).map_err(py_err)
}

#[pyfunction]
fn error_pct(predicted: f64, ground_truth: f64) -> PyResult<f64> {
    core::eval::error_pct(predicted, ground_truth).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (logit, tau = 10.0))]
fn alpha(logit: f64, tau: f64) -> f64 {
    core::tree_regressor::alpha_from_logit(logit, tau)
}

/// `(kwh, usd)`.
#[pyfunction]
#[pyo3(signature = (energy_per_query_j, n_queries, usd_per_kwh = 0.1319))]
fn cost_of_queries(energy_per_query_j: f64, n_queries: f64, usd_per_kwh: f64) -> PyResult<(f64, f64)> {
    let c = core::analysis::cost_of_queries(energy_per_query_j, n_queries, usd_per_kwh).map_err(py_err)?;
    Ok((c.kwh, c.usd))
}

/// Samples are `(timestamp_s, voltage_v, current_a)`.
#[pyfunction]
#[pyo3(signature = (samples, interval_s = 0.17))]
fn integrate_power(samples: Vec<(f64, f64, f64)>, interval_s: f64) -> PyResult<f64> {
    let samples: Vec<core::analysis::PowerSample> = samples
        .into_iter()
        .map(|(timestamp, voltage, current)| core::analysis::PowerSample { timestamp, voltage, current })
        .collect();
    core::analysis::integrate_power(&samples, interval_s).map_err(py_err)
}

/// Runs the command-line tool in-process and returns its exit status.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    core::cli::run(std::iter::once("enertree".to_string()).chain(args))
}

#[pymodule]
pub fn enertree(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelTree>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(predict_sum, m)?)?;
    m.add_function(wrap_pyfunction!(error_pct, m)?)?;
    m.add_function(wrap_pyfunction!(alpha, m)?)?;
    m.add_function(wrap_pyfunction!(cost_of_queries, m)?)?;
    m.add_function(wrap_pyfunction!(integrate_power, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add("FEATURE_NAMES", core::FEATURE_NAMES.to_vec())?;
    Ok(())
}
