//! Command-line entry point. Every subcommand writes its outputs under the
//! output directory and prints one JSON summary line on stdout.

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use crate::analysis::{self, DEFAULT_POWER_INTERVAL_S};
use crate::baseline::{BaselineConfig, ResourceTrace};
use crate::error::{Error, Result};
use crate::eval::{self, EvalConfig, TrainedModel};
use crate::features::FeatureSubset;
use crate::leaf::PrimitiveRegressorSet;
use crate::synthetic::{generate_dataset, SyntheticSpec};
use crate::tree::ModelTree;
use crate::tree_regressor::{
    RegressorKind, TrainConfig, TreeRegressorFile, DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE, DEFAULT_TAU,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_TRAINING: i32 = 3;

pub const LEAF_FILE: &str = "leaf_regressors.json";
pub const TREE_REGRESSOR_FILE: &str = "tree_regressor.json";

#[derive(Debug, Parser)]
#[command(name = "enertree", version, about = "Tree-structured inference energy prediction")]
pub struct Cli {
    /// Output directory.
    #[arg(short, long, global = true, env = "ENERTREE_OUT", default_value = "out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labelled dataset.
    Synth(SynthArgs),
    /// Train leaf and tree regressors on labelled trees.
    Train(TrainArgs),
    /// Predict and annotate trees with trained regressors.
    Predict(PredictArgs),
    /// Leave-one-model-out evaluation.
    Eval(EvalArgs),
    /// Compare all, model-only and resource-only feature sets.
    AblateFeatures(EvalArgs),
    /// Compare End2End, StepWise, PredictedSum and Unstructured.
    AblateRegressors(EvalArgs),
    /// Per-module-type share of predicted model energy.
    Bottleneck(BottleneckArgs),
    /// Pick the most accurate model within an energy budget.
    Tradeoff(TradeoffArgs),
    /// Energy and dollar cost of serving queries.
    Cost(CostArgs),
    /// Integrate a voltage/current log into joules.
    IntegratePower(PowerArgs),
    /// Check tree files against the schema invariants.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// exact, biased or feature-ablation.
    #[arg(long, default_value = "exact")]
    pub scenario: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the layer count of every model.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Keep only these models (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub batch_sizes: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    pub seq_lens: Vec<u32>,
    /// Also write a utilization trace per tree for the baseline.
    #[arg(long)]
    pub traces: bool,
}

#[derive(Debug, Args, Clone)]
pub struct HyperArgs {
    #[arg(long, default_value = "end2end")]
    pub regressor: String,
    #[arg(long, default_value = "all")]
    pub subset: String,
    #[arg(long, default_value_t = DEFAULT_LEARNING_RATE)]
    pub lr: f64,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    pub epochs: usize,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pooled leaf regressor for primitives unseen in training.
    #[arg(long)]
    pub fallback_generic: bool,
    /// Clamp leaf predictions from below.
    #[arg(long)]
    pub leaf_floor: Option<f64>,
    /// Power usage effectiveness for the utilization baseline.
    #[arg(long, default_value_t = 1.0)]
    pub pue: f64,
}

impl HyperArgs {
    fn config(&self) -> Result<EvalConfig> {
        let kind: RegressorKind = self.regressor.parse()?;
        let subset: FeatureSubset = self.subset.parse()?;
        Ok(EvalConfig {
            kind,
            train: TrainConfig {
                learning_rate: self.lr,
                epochs: self.epochs,
                tau: self.tau,
                seed: self.seed,
                subset,
                ..Default::default()
            },
            fallback_generic: self.fallback_generic,
            leaf_floor: self.leaf_floor,
            baseline: BaselineConfig { pue: self.pue },
        })
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Tree files or directories of tree files.
    #[arg(required = true)]
    pub trees: Vec<PathBuf>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(required = true)]
    pub trees: Vec<PathBuf>,
    /// Leave-one-model-out protocol (the only one supported).
    #[arg(long)]
    pub loo: bool,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Args)]
pub struct ModelFiles {
    #[arg(long)]
    pub leaf: PathBuf,
    #[arg(long)]
    pub tree_regressor: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(required = true)]
    pub trees: Vec<PathBuf>,
    #[command(flatten)]
    pub model: ModelFiles,
}

#[derive(Debug, Args)]
pub struct BottleneckArgs {
    #[arg(required = true)]
    pub trees: Vec<PathBuf>,
    #[command(flatten)]
    pub model: ModelFiles,
    /// Also report shares rescaled to sum to 100.
    #[arg(long)]
    pub renormalize: bool,
}

#[derive(Debug, Args)]
pub struct TradeoffArgs {
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub budget: f64,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[arg(long)]
    pub energy_per_query: f64,
    #[arg(long)]
    pub queries: f64,
    #[arg(long, default_value_t = 0.1319)]
    pub usd_per_kwh: f64,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, default_value_t = DEFAULT_POWER_INTERVAL_S)]
    pub interval: f64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(required = true)]
    pub trees: Vec<PathBuf>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_USAGE,
        Error::Training(_) => EXIT_TRAINING,
        _ => EXIT_VALIDATION,
    }
}

/// Parses `argv` (program name first), runs one subcommand and returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(Failure::Invalid(violations)) => {
            for v in &violations {
                eprintln!("{v}");
            }
            println!("{}", json!({ "status": "invalid", "violations": violations.len() }));
            EXIT_VALIDATION
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

enum Failure {
    Invalid(Vec<String>),
    Error(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(e.into())
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

/// Expands directories to their `*.json` tree files (sorted, `*.meta.json`
/// skipped).
pub fn expand_tree_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json") && !f.to_string_lossy().ends_with(".meta.json"))
                .collect();
            found.sort();
            out.extend(found);
        } else if p.exists() {
            out.push(p.clone());
        } else {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("no such file: {}", p.display()),
            )));
        }
    }
    Ok(out)
}

fn load_trees(paths: &[PathBuf]) -> std::result::Result<(Vec<ModelTree>, Vec<PathBuf>), Failure> {
    let files = expand_tree_paths(paths)?;
    let mut trees = Vec::new();
    let mut violations = Vec::new();
    for f in &files {
        let t = ModelTree::from_path(f).map_err(|e| match e {
            Error::Io(_) => e,
            other => Error::Malformed(format!("{}: {other}", f.display())),
        })?;
        violations.extend(t.validate().into_iter().map(|v| format!("{}: {v}", f.display())));
        trees.push(t);
    }
    if !violations.is_empty() {
        return Err(Failure::Invalid(violations));
    }
    if trees.is_empty() {
        return Err(Error::Empty("tree files").into());
    }
    Ok((trees, files))
}

fn load_model(files: &ModelFiles) -> Result<TrainedModel> {
    let leaf_text = std::fs::read_to_string(&files.leaf)?;
    let leaf = PrimitiveRegressorSet::from_json(&leaf_text)?;
    let tree_file = TreeRegressorFile::from_json(&std::fs::read_to_string(&files.tree_regressor)?)?;
    if !tree_file.matches_leaf_file(&leaf_text) {
        return Err(Error::InvalidInput(format!(
            "{} was trained against different leaf regressors than {}",
            files.tree_regressor.display(),
            files.leaf.display()
        )));
    }
    Ok(TrainedModel { leaf, aggregator: tree_file.regressor })
}

fn fmt_opt(v: Option<f64>) -> serde_json::Value {
    v.map_or(serde_json::Value::Null, |x| json!(x))
}

fn execute(cli: &Cli) -> std::result::Result<String, Failure> {
    let out = &cli.out;
    match &cli.command {
        Command::Synth(a) => {
            let mut spec = SyntheticSpec::scenario(&a.scenario, a.seed)?;
            if let Some(l) = a.layers {
                spec.models.iter_mut().for_each(|m| m.n_layers = l);
            }
            if !a.models.is_empty() {
                spec.models.retain(|m| a.models.contains(&m.name));
            }
            if !a.batch_sizes.is_empty() {
                spec.batch_sizes = a.batch_sizes.clone();
            }
            if !a.seq_lens.is_empty() {
                spec.seq_lens = a.seq_lens.clone();
            }
            let data = generate_dataset(&spec)?;
            data.write_to(out, a.traces)?;
            write(out, "synth_spec.meta.json", &serde_json::to_string_pretty(&spec).map_err(Error::from)?)?;
            Ok(json!({
                "command": "synth",
                "scenario": a.scenario,
                "trees": data.trees.len(),
                "models": spec.models.len(),
                "seed": a.seed,
            })
            .to_string())
        }
        Command::Validate(a) => {
            let files = expand_tree_paths(&a.trees)?;
            let mut report = Vec::new();
            let mut total = 0;
            for f in &files {
                let violations = match ModelTree::from_path(f) {
                    Ok(t) => t.validate(),
                    Err(Error::Io(e)) => return Err(Error::Io(e).into()),
                    Err(e) => vec![e.to_string()],
                };
                total += violations.len();
                report.push(json!({ "file": f.display().to_string(), "violations": violations }));
            }
            write(out, "validation.json", &serde_json::to_string_pretty(&report).map_err(Error::from)?)?;
            if total > 0 {
                let msgs = report
                    .iter()
                    .flat_map(|r| {
                        let file = r["file"].as_str().unwrap_or_default().to_string();
                        r["violations"].as_array().cloned().unwrap_or_default().into_iter().map(move |v| format!("{file}: {}", v.as_str().unwrap_or_default()))
                    })
                    .collect();
                return Err(Failure::Invalid(msgs));
            }
            Ok(json!({ "command": "validate", "files": files.len(), "violations": 0 }).to_string())
        }
        Command::Train(a) => {
            let (trees, _) = load_trees(&a.trees)?;
            let cfg = a.hyper.config()?;
            if cfg.kind == RegressorKind::Baseline {
                return Err(Error::InvalidInput("the baseline has nothing to train".into()).into());
            }
            let model = TrainedModel::train(&trees, &cfg)?;
            let leaf_text = model.leaf.to_json();
            let tree_file = TreeRegressorFile::new(model.aggregator.clone(), &leaf_text);
            write(out, LEAF_FILE, &leaf_text)?;
            write(out, TREE_REGRESSOR_FILE, &tree_file.to_json())?;
            Ok(json!({
                "command": "train",
                "regressor": cfg.kind.as_str(),
                "subset": cfg.train.subset.as_str(),
                "trees": trees.len(),
                "primitives": model.leaf.vocabulary(),
            })
            .to_string())
        }
        Command::Predict(a) => {
            let (trees, _) = load_trees(&a.trees)?;
            let model = load_model(&a.model)?;
            let mut roots = BTreeMap::new();
            for t in &trees {
                let preds = model.predict(t)?;
                let key = t.key();
                write(out, &format!("{key}.predictions.json"), &serde_json::to_string_pretty(&preds).map_err(Error::from)?)?;
                write(out, &format!("{key}.render.txt"), &t.render_annotated(&preds)?)?;
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["node", "predicted_j"]).map_err(Error::from)?;
                for n in t.iter() {
                    w.write_record([n.name.clone(), preds[&n.name].to_string()]).map_err(Error::from)?;
                }
                let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
                write(out, &format!("{key}.predictions.csv"), &String::from_utf8_lossy(&bytes))?;
                roots.insert(key, preds[&t.root.name]);
            }
            Ok(json!({ "command": "predict", "regressor": model.aggregator.kind().as_str(), "root_energy_j": roots }).to_string())
        }
        Command::Eval(a) => {
            let (trees, files) = load_trees(&a.trees)?;
            let cfg = a.hyper.config()?;
            let traces = if cfg.kind == RegressorKind::Baseline { Some(load_traces(&trees, &files)?) } else { None };
            let report = eval::run_eval(&trees, traces.as_ref(), &cfg)?;
            write(out, "eval_report.json", &serde_json::to_string_pretty(&report).map_err(Error::from)?)?;
            write(out, "eval_records.csv", &report.records_csv()?)?;
            write(out, "eval_cdf.csv", &report.cdf_csv()?)?;
            write(out, "eval_summary.csv", &report.summary_csv()?)?;
            let avg = &report.average_over_models;
            Ok(json!({
                "command": "eval",
                "regressor": cfg.kind.as_str(),
                "subset": cfg.train.subset.as_str(),
                "folds": report.per_model.len(),
                "ml_error_pct": fmt_opt(avg.ml),
                "module_error_pct": fmt_opt(avg.module),
                "model_error_pct": fmt_opt(avg.model),
            })
            .to_string())
        }
        Command::AblateFeatures(a) | Command::AblateRegressors(a) => {
            let (trees, _) = load_trees(&a.trees)?;
            let cfg = a.hyper.config()?;
            let (name, table) = match &cli.command {
                Command::AblateFeatures(_) => ("ablate_features", eval::ablate_features(&trees, &cfg)?),
                _ => ("ablate_regressors", eval::ablate_regressors(&trees, &cfg)?),
            };
            write(out, &format!("{name}.csv"), &table.to_csv()?)?;
            write(out, &format!("{name}.json"), &serde_json::to_string_pretty(&table).map_err(Error::from)?)?;
            let rows: BTreeMap<&str, serde_json::Value> = table
                .rows
                .iter()
                .map(|r| (r.label.as_str(), json!([fmt_opt(r.errors.ml), fmt_opt(r.errors.module), fmt_opt(r.errors.model)])))
                .collect();
            Ok(json!({ "command": name.replace('_', "-"), "rows": rows }).to_string())
        }
        Command::Bottleneck(a) => {
            let (trees, _) = load_trees(&a.trees)?;
            let model = load_model(&a.model)?;
            let preds = trees.iter().map(|t| model.predict(t)).collect::<Result<Vec<_>>>()?;
            let mut by_model: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, t) in trees.iter().enumerate() {
                by_model.entry(t.model_name.as_str()).or_default().push(i);
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            let header = if a.renormalize {
                vec!["model_name", "module_type", "percent", "percent_renormalized"]
            } else {
                vec!["model_name", "module_type", "percent"]
            };
            w.write_record(&header).map_err(Error::from)?;
            let mut summary = BTreeMap::new();
            for (m, idx) in &by_model {
                let runs: Vec<_> = idx.iter().map(|&i| (&trees[i], &preds[i])).collect();
                let shares = analysis::bottleneck_breakdown(&runs)?;
                let renorm = analysis::renormalize(&shares);
                for (ty, pct) in &shares {
                    let mut rec = vec![m.to_string(), ty.clone(), pct.to_string()];
                    if a.renormalize {
                        rec.push(renorm[ty].to_string());
                    }
                    w.write_record(&rec).map_err(Error::from)?;
                }
                let top = shares.iter().max_by(|x, y| x.1.total_cmp(y.1)).map(|(k, _)| k.clone());
                summary.insert(m.to_string(), top);
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            write(out, "bottleneck.csv", &String::from_utf8_lossy(&bytes))?;
            Ok(json!({ "command": "bottleneck", "top_module_type": summary }).to_string())
        }
        Command::Tradeoff(a) => {
            let cands = analysis::read_candidates(&a.candidates)?;
            let best = analysis::tradeoff_select(&cands, a.budget)?;
            let front = analysis::pareto_front(&cands);
            let mut w = csv::Writer::from_writer(Vec::new());
            for c in &front {
                w.serialize(c).map_err(Error::from)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            write(out, "pareto.csv", &String::from_utf8_lossy(&bytes))?;
            write(out, "tradeoff.json", &serde_json::to_string_pretty(&json!({ "budget_j": a.budget, "best": best, "pareto": front })).map_err(Error::from)?)?;
            Ok(json!({ "command": "tradeoff", "best": best.model_name, "pareto_size": front.len() }).to_string())
        }
        Command::Cost(a) => {
            let c = analysis::cost_of_queries(a.energy_per_query, a.queries, a.usd_per_kwh)?;
            write(out, "cost.json", &serde_json::to_string_pretty(&c).map_err(Error::from)?)?;
            Ok(json!({ "command": "cost", "kwh": c.kwh, "usd": c.usd }).to_string())
        }
        Command::IntegratePower(a) => {
            let samples = analysis::read_power_log(&a.log)?;
            let joules = analysis::integrate_power(&samples, a.interval)?;
            write(out, "energy.json", &serde_json::to_string_pretty(&json!({ "samples": samples.len(), "interval_s": a.interval, "energy_j": joules })).map_err(Error::from)?)?;
            Ok(json!({ "command": "integrate-power", "samples": samples.len(), "energy_j": joules }).to_string())
        }
    }
}

/// Traces live next to their trees as `<stem>.trace.csv`.
fn load_traces(trees: &[ModelTree], files: &[PathBuf]) -> Result<BTreeMap<String, ResourceTrace>> {
    let mut out = BTreeMap::new();
    for (t, f) in trees.iter().zip(files) {
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let path = f.with_file_name(format!("{stem}.trace.csv"));
        out.insert(t.key(), ResourceTrace::from_path(&path)?);
    }
    Ok(out)
}
