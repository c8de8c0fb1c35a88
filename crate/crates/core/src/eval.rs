//! Leave-one-model-out evaluation, per-level error aggregation, error CDFs
//! and the feature/regressor ablations.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use crate::baseline::{utilization_energy, BaselineConfig, ResourceTrace};
use crate::error::{Error, Result};
use crate::features::FeatureSubset;
use crate::leaf::{LeafOptions, PrimitiveRegressorSet};
use crate::tree::{Level, ModelTree, PredictionMap};
use crate::tree_regressor::{Aggregator, RegressorKind, TrainConfig};

/// `100 · |predicted − truth| / truth`.
pub fn error_pct(predicted: f64, ground_truth: f64) -> Result<f64> {
    if !(ground_truth > 0.0) {
        return Err(Error::NonPositiveGroundTruth(ground_truth));
    }
    Ok(100.0 * (predicted - ground_truth).abs() / ground_truth)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub error_pct: f64,
    pub fraction: f64,
}

/// Empirical CDF with one point per distinct error value.
pub fn error_cdf(errors: &[f64]) -> Result<Vec<CdfPoint>> {
    if errors.is_empty() {
        return Err(Error::Empty("error list"));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<CdfPoint> = Vec::new();
    for (i, e) in sorted.iter().enumerate() {
        let fraction = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.error_pct == *e => last.fraction = fraction,
            _ => out.push(CdfPoint { error_pct: *e, fraction }),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub held_out: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One fold per model name (sorted); each fold tests on every tree of its
/// model and trains on all the others.
pub fn loo_splits(trees: &[ModelTree]) -> Result<Vec<Fold>> {
    let names: BTreeSet<&str> = trees.iter().map(|t| t.model_name.as_str()).collect();
    if names.len() < 2 {
        return Err(Error::LooInfeasible(names.len()));
    }
    Ok(names
        .into_iter()
        .map(|held_out| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..trees.len()).partition(|&i| trees[i].model_name == held_out);
            Fold { held_out: held_out.to_string(), train, test }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub kind: RegressorKind,
    pub train: TrainConfig,
    pub fallback_generic: bool,
    pub leaf_floor: Option<f64>,
    pub baseline: BaselineConfig,
}

impl EvalConfig {
    pub fn new(kind: RegressorKind, subset: FeatureSubset, seed: u64) -> Self {
        Self {
            kind,
            train: TrainConfig { subset, seed, ..Default::default() },
            fallback_generic: false,
            leaf_floor: None,
            baseline: BaselineConfig::default(),
        }
    }

    pub fn leaf_options(&self) -> LeafOptions {
        LeafOptions { subset: self.train.subset, fallback_generic: self.fallback_generic, floor: self.leaf_floor }
    }
}

/// Leaf regressors plus an aggregation scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub leaf: PrimitiveRegressorSet,
    pub aggregator: Aggregator,
}

impl TrainedModel {
    pub fn train(trees: &[ModelTree], cfg: &EvalConfig) -> Result<Self> {
        let leaf = PrimitiveRegressorSet::train(trees, cfg.leaf_options())?;
        let aggregator = Aggregator::train(cfg.kind, trees, &leaf, &cfg.train)?;
        Ok(Self { leaf, aggregator })
    }

    pub fn predict(&self, tree: &ModelTree) -> Result<PredictionMap> {
        self.aggregator.predict(tree, &self.leaf.predict_leaves(tree)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub model_name: String,
    pub tree: String,
    pub node: String,
    pub level: Level,
    pub predicted_j: f64,
    pub ground_truth_j: f64,
    pub error_pct: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelErrors {
    pub ml: Option<f64>,
    pub module: Option<f64>,
    pub model: Option<f64>,
}

impl LevelErrors {
    pub fn get(&self, level: Level) -> Option<f64> {
        match level {
            Level::Ml => self.ml,
            Level::Module => self.module,
            Level::Model => self.model,
        }
    }

    fn set(&mut self, level: Level, v: Option<f64>) {
        match level {
            Level::Ml => self.ml = v,
            Level::Module => self.module = v,
            Level::Model => self.model = v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelErrors {
    pub model_name: String,
    pub errors: LevelErrors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub per_model: Vec<ModelErrors>,
    /// Mean over nodes within each model, then mean over models.
    pub average_over_models: LevelErrors,
    /// Mean over all nodes of a level, pooled across models.
    pub average_over_nodes: LevelErrors,
    pub records: Vec<NodeRecord>,
    pub cdf: BTreeMap<Level, Vec<CdfPoint>>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl EvalReport {
    /// Aggregates per-node records. Models appear in sorted order.
    pub fn from_records(config: EvalConfig, records: Vec<NodeRecord>) -> Result<Self> {
        let models: BTreeSet<&str> = records.iter().map(|r| r.model_name.as_str()).collect();
        let mut per_model = Vec::new();
        for m in &models {
            let mut errors = LevelErrors::default();
            for level in Level::ALL {
                errors.set(
                    level,
                    mean(records.iter().filter(|r| r.model_name == *m && r.level == level).map(|r| r.error_pct)),
                );
            }
            per_model.push(ModelErrors { model_name: m.to_string(), errors });
        }
        let mut average_over_models = LevelErrors::default();
        let mut average_over_nodes = LevelErrors::default();
        let mut cdf = BTreeMap::new();
        for level in Level::ALL {
            average_over_models.set(level, mean(per_model.iter().filter_map(|m| m.errors.get(level))));
            let errs: Vec<f64> = records.iter().filter(|r| r.level == level).map(|r| r.error_pct).collect();
            average_over_nodes.set(level, mean(errs.iter().copied()));
            if !errs.is_empty() {
                cdf.insert(level, error_cdf(&errs)?);
            }
        }
        Ok(Self { config, per_model, average_over_models, average_over_nodes, records, cdf })
    }

    pub fn level(&self, level: Level) -> Option<f64> {
        self.average_over_models.get(level)
    }

    pub fn records_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r)?;
        }
        into_string(w)
    }

    pub fn cdf_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["level", "error_pct", "fraction"])?;
        for (level, pts) in &self.cdf {
            for p in pts {
                w.write_record([level.as_str().to_string(), p.error_pct.to_string(), p.fraction.to_string()])?;
            }
        }
        into_string(w)
    }

    pub fn summary_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model_name", "ml", "module", "model"])?;
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for m in &self.per_model {
            w.write_record([m.model_name.clone(), fmt(m.errors.ml), fmt(m.errors.module), fmt(m.errors.model)])?;
        }
        for (label, e) in [("average_over_models", &self.average_over_models), ("average_over_nodes", &self.average_over_nodes)] {
            w.write_record([label.to_string(), fmt(e.ml), fmt(e.module), fmt(e.model)])?;
        }
        into_string(w)
    }
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Per-fold seeds derived from one top-level seed.
pub fn fold_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.next_u64()).collect()
}

fn records_for(tree: &ModelTree, preds: &PredictionMap) -> Result<Vec<NodeRecord>> {
    tree.iter()
        .enumerate()
        .map(|(i, n)| {
            let g = n.ground_truth_energy.ok_or_else(|| Error::MissingGroundTruth(n.name.clone()))?;
            let p = *preds.get(&n.name).ok_or_else(|| Error::MissingPrediction(n.name.clone()))?;
            let level = if i == 0 { Level::Model } else if n.is_leaf() { Level::Ml } else { Level::Module };
            Ok(NodeRecord {
                model_name: tree.model_name.clone(),
                tree: tree.key(),
                node: n.name.clone(),
                level,
                predicted_j: p,
                ground_truth_j: g,
                error_pct: error_pct(p, g)?,
            })
        })
        .collect()
}

/// Leave-one-model-out evaluation of `cfg.kind`. The baseline kind needs a
/// trace per tree, keyed by [`ModelTree::key`], and reports model level only.
pub fn run_eval(
    trees: &[ModelTree],
    traces: Option<&BTreeMap<String, ResourceTrace>>,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let folds = loo_splits(trees)?;
    let seeds = fold_seeds(cfg.train.seed, folds.len());
    let per_fold: Vec<Vec<NodeRecord>> = folds
        .par_iter()
        .zip(seeds)
        .map(|(fold, seed)| -> Result<Vec<NodeRecord>> {
            let test: Vec<&ModelTree> = fold.test.iter().map(|&i| &trees[i]).collect();
            if cfg.kind == RegressorKind::Baseline {
                let traces = traces.ok_or_else(|| Error::InvalidInput("baseline evaluation needs resource traces".into()))?;
                return test
                    .iter()
                    .map(|t| {
                        let trace = traces
                            .get(&t.key())
                            .ok_or_else(|| Error::InvalidInput(format!("no resource trace for `{}`", t.key())))?;
                        let p = utilization_energy(trace, &cfg.baseline)?;
                        let g = t.root.ground_truth_energy.ok_or_else(|| Error::MissingGroundTruth(t.root.name.clone()))?;
                        Ok(NodeRecord {
                            model_name: t.model_name.clone(),
                            tree: t.key(),
                            node: t.root.name.clone(),
                            level: Level::Model,
                            predicted_j: p,
                            ground_truth_j: g,
                            error_pct: error_pct(p, g)?,
                        })
                    })
                    .collect();
            }
            let train: Vec<ModelTree> = fold.train.iter().map(|&i| trees[i].clone()).collect();
            let fold_cfg = EvalConfig { train: TrainConfig { seed, ..cfg.train }, ..*cfg };
            let model = TrainedModel::train(&train, &fold_cfg)?;
            let mut out = Vec::new();
            for t in test {
                out.extend(records_for(t, &model.predict(t)?)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    EvalReport::from_records(*cfg, per_fold.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub errors: LevelErrors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, label: &str) -> Option<&LevelErrors> {
        self.rows.iter().find(|r| r.label == label).map(|r| &r.errors)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["variant", "ml", "module", "model"])?;
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([r.label.clone(), fmt(r.errors.ml), fmt(r.errors.module), fmt(r.errors.model)])?;
        }
        into_string(w)
    }
}

/// `cfg.kind` evaluated with all, model-only and resource-only features.
pub fn ablate_features(trees: &[ModelTree], cfg: &EvalConfig) -> Result<AblationTable> {
    let rows = FeatureSubset::ALL
        .iter()
        .map(|&subset| {
            let c = EvalConfig { train: TrainConfig { subset, ..cfg.train }, ..*cfg };
            Ok(AblationRow { label: subset.as_str().to_string(), errors: run_eval(trees, None, &c)?.average_over_models })
        })
        .collect::<Result<_>>()?;
    Ok(AblationTable { rows })
}

/// End2End, StepWise, PredictedSum and Unstructured on identical folds.
pub fn ablate_regressors(trees: &[ModelTree], cfg: &EvalConfig) -> Result<AblationTable> {
    let rows = RegressorKind::AGGREGATORS
        .iter()
        .map(|&kind| {
            let c = EvalConfig { kind, ..*cfg };
            Ok(AblationRow { label: kind.as_str().to_string(), errors: run_eval(trees, None, &c)?.average_over_models })
        })
        .collect::<Result<_>>()?;
    Ok(AblationTable { rows })
}
