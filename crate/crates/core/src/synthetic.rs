//! Synthetic transformer-like model trees with a known energy oracle.
//!
//! Features are smooth functions of (batch, sequence, hidden size, primitive)
//! with seeded multiplicative noise. Ground truth comes from [`OracleParams`]:
//! each leaf is linear in its raw features (optionally with a curvature term
//! in GPU utilization), and each parent is `β(type) · Σ children`.
//!
//! The `cpu_util` feature of every non-root node carries the calibration
//! factor of its parent: `cpu_util = 50 + 15·atanh(τ(β_parent − 1))`. A
//! child-weighting regressor that sees `cpu_util` can therefore represent the
//! oracle's per-type bias.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::baseline::{ResourceTrace, TraceSample};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::tree::{ModelTree, Node, NodeKind, PredictionMap};
use crate::tree_regressor::DEFAULT_TAU;

const PEAK_MFLOPS_PER_S: f64 = 1.4e7;
const BANDWIDTH_MIB_PER_S: f64 = 4.0e5;
const LAUNCH_S: f64 = 1.5e-5;
const MIB: f64 = 1024.0 * 1024.0;
/// Percent of CPU utilization per unit of `atanh(τ(β − 1))`; keeps the
/// signal inside [5, 95] over the whole admissible β range.
const CPU_SIGNAL_SCALE: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Embeddings, encoder of self-attention layers, pooler. Depth 6.
    BertLike,
    /// Embeddings and a transformer of blocks with attention and FFN. Depth 5.
    DistilLike,
    /// Decoder blocks built from Conv1D projections. Depth 4.
    GptLike,
}

impl Family {
    pub fn root_type(self) -> &'static str {
        match self {
            Family::BertLike => "BertModel",
            Family::DistilLike => "DistilBertModel",
            Family::GptLike => "GPT2Model",
        }
    }

    pub fn module_types(self) -> &'static [&'static str] {
        match self {
            Family::BertLike => &[
                "BertModel",
                "BertEmbeddings",
                "BertEncoder",
                "BertLayer",
                "BertAttention",
                "BertSelfAttention",
                "BertSelfOutput",
                "BertIntermediate",
                "BertOutput",
                "BertPooler",
            ],
            Family::DistilLike => &[
                "DistilBertModel",
                "Embeddings",
                "Transformer",
                "TransformerBlock",
                "MultiHeadSelfAttention",
                "FFN",
            ],
            Family::GptLike => &["GPT2Model", "GPT2Block", "GPT2Attention", "GPT2MLP"],
        }
    }

    pub fn primitives(self) -> &'static [&'static str] {
        match self {
            Family::BertLike => &["Embedding", "LayerNorm", "Linear", "MatMul", "Softmax", "Tanh"],
            Family::DistilLike => &["Embedding", "LayerNorm", "Linear", "MatMul", "Softmax"],
            Family::GptLike => &["Embedding", "LayerNorm", "Conv1D", "MatMul", "Softmax", "GELU"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub family: Family,
    pub n_layers: usize,
    pub hidden: usize,
}

impl ModelSpec {
    pub fn new(name: &str, family: Family, n_layers: usize, hidden: usize) -> Self {
        Self { name: name.to_string(), family, n_layers, hidden }
    }
}

/// How leaf oracle weights are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafEnergyModel {
    /// Positive weights on GPU energy, latency, FLOPs, memory, CPU utilization and clocks.
    Mixed,
    /// Energy depends on `flops` and `gpu_util` only.
    FlopsAndGpuUtil,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub models: Vec<ModelSpec>,
    pub batch_sizes: Vec<u32>,
    pub seq_lens: Vec<u32>,
    pub seed: u64,
    /// Interval the per-module-type calibration factors β are drawn from.
    pub module_bias_range: (f64, f64),
    /// Half-width of the uniform multiplicative feature noise.
    pub feature_noise: f64,
    /// Leaf energy is multiplied by `1 + curvature·(gpu_util/100)²`.
    /// Zero keeps leaves exactly linear in their features.
    pub leaf_curvature: f64,
    pub leaf_model: LeafEnergyModel,
}

/// Batch sizes 8..=32 step 8 and sequence lengths 32..=256 step 32.
pub fn standard_grid() -> (Vec<u32>, Vec<u32>) {
    ((1..=4).map(|i| 8 * i).collect(), (1..=8).map(|i| 32 * i).collect())
}

/// Six models, two per family, so every primitive is seen by at least two.
pub fn standard_models() -> Vec<ModelSpec> {
    vec![
        ModelSpec::new("bert-base", Family::BertLike, 12, 768),
        ModelSpec::new("bert-medium", Family::BertLike, 8, 512),
        ModelSpec::new("distilbert", Family::DistilLike, 6, 768),
        ModelSpec::new("distilbert-small", Family::DistilLike, 3, 512),
        ModelSpec::new("gpt2", Family::GptLike, 12, 768),
        ModelSpec::new("gpt2-small", Family::GptLike, 6, 512),
    ]
}

impl SyntheticSpec {
    /// Exactly linear leaves and β ≡ 1: the plain sum is the truth.
    pub fn exact_linear(seed: u64) -> Self {
        let (batch_sizes, seq_lens) = standard_grid();
        Self {
            models: standard_models(),
            batch_sizes,
            seq_lens,
            seed,
            module_bias_range: (1.0, 1.0),
            feature_noise: 0.01,
            leaf_curvature: 0.0,
            leaf_model: LeafEnergyModel::Mixed,
        }
    }

    /// Per-type β in [0.95, 1.05] and mildly nonlinear leaves.
    pub fn biased(seed: u64) -> Self {
        Self { module_bias_range: (0.95, 1.05), leaf_curvature: 0.3, ..Self::exact_linear(seed) }
    }

    /// Leaves depend on one model feature (`flops`) and one resource feature
    /// (`gpu_util`).
    pub fn feature_ablation(seed: u64) -> Self {
        Self { leaf_model: LeafEnergyModel::FlopsAndGpuUtil, ..Self::exact_linear(seed) }
    }

    pub fn scenario(name: &str, seed: u64) -> Result<Self> {
        match name {
            "exact" | "exact-linear" => Ok(Self::exact_linear(seed)),
            "biased" => Ok(Self::biased(seed)),
            "feature-ablation" => Ok(Self::feature_ablation(seed)),
            other => Err(Error::InvalidInput(format!("unknown scenario `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidInput(m));
        if self.models.is_empty() {
            return fail("at least one model is required".into());
        }
        if self.batch_sizes.is_empty() || self.seq_lens.is_empty() {
            return fail("batch and sequence grids must be non-empty".into());
        }
        if self.batch_sizes.iter().chain(&self.seq_lens).any(|&v| v == 0) {
            return fail("grid values must be positive".into());
        }
        let names: BTreeSet<&str> = self.models.iter().map(|m| m.name.as_str()).collect();
        if names.len() != self.models.len() {
            return fail("model names must be unique".into());
        }
        if let Some(m) = self.models.iter().find(|m| m.n_layers == 0 || m.hidden < 64 || m.hidden % 64 != 0) {
            return fail(format!("model `{}` needs n_layers >= 1 and hidden a positive multiple of 64", m.name));
        }
        let (lo, hi) = self.module_bias_range;
        let bound = 1.0 / DEFAULT_TAU;
        if !(lo <= hi && lo >= 1.0 - bound && hi <= 1.0 + bound) {
            return fail(format!("module bias range ({lo}, {hi}) must lie within [{}, {}]", 1.0 - bound, 1.0 + bound));
        }
        if !(0.0..=0.01).contains(&self.feature_noise) {
            return fail(format!("feature noise {} must be within [0, 0.01]", self.feature_noise));
        }
        if !(self.leaf_curvature >= 0.0) {
            return fail("leaf curvature must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafOracle {
    /// Weights over raw features in canonical order.
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    pub leaf: BTreeMap<String, LeafOracle>,
    pub module_bias: BTreeMap<String, f64>,
    pub leaf_curvature: f64,
}

impl OracleParams {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("oracle serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn leaf_energy(&self, node: &Node) -> Result<f64> {
        let prim = node.primitive.as_deref().unwrap_or_default();
        let o = self.leaf.get(prim).ok_or_else(|| Error::UnknownPrimitive(prim.to_string()))?;
        let x = node.features.to_array();
        let linear: f64 = o.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + o.bias;
        let u = node.features.gpu_util / 100.0;
        Ok(linear * (1.0 + self.leaf_curvature * u * u))
    }

    pub fn bias_of(&self, type_name: &str) -> f64 {
        self.module_bias.get(type_name).copied().unwrap_or(1.0)
    }
}

/// True energy of every node of `tree` under `params`.
pub fn oracle_energy(params: &OracleParams, tree: &ModelTree) -> Result<PredictionMap> {
    fn walk(p: &OracleParams, n: &Node, out: &mut PredictionMap) -> Result<f64> {
        let e = if n.is_leaf() {
            p.leaf_energy(n)?
        } else {
            let mut s = 0.0;
            for c in &n.children {
                s += walk(p, c, out)?;
            }
            p.bias_of(&n.type_name) * s
        };
        out.insert(n.name.clone(), e);
        Ok(e)
    }
    let mut out = PredictionMap::new();
    walk(params, &tree.root, &mut out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub trees: Vec<ModelTree>,
    pub oracle: OracleParams,
}

impl SyntheticDataset {
    /// Writes `<key>.json` per tree and `oracle.meta.json`; with `traces`, also a
    /// `<key>.trace.csv` utilization trace per tree.
    pub fn write_to(&self, dir: &Path, traces: bool) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for t in &self.trees {
            let p = dir.join(format!("{}.json", t.key()));
            std::fs::write(&p, t.to_json())?;
            written.push(p);
            if traces {
                let p = dir.join(format!("{}.trace.csv", t.key()));
                std::fs::write(&p, synthetic_trace(t).to_csv()?)?;
                written.push(p);
            }
        }
        let p = dir.join("oracle.meta.json");
        std::fs::write(&p, self.oracle.to_json())?;
        written.push(p);
        Ok(written)
    }
}

/// One tree per (model, batch, seq) grid point, labelled by the oracle.
pub fn generate_dataset(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let oracle = draw_oracle(spec);
    let mut trees = Vec::new();
    let mut stream = 0u64;
    for m in &spec.models {
        for &b in &spec.batch_sizes {
            for &s in &spec.seq_lens {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(stream);
                stream += 1;
                let mut t = build_tree(m, b, s, &oracle, spec.feature_noise, &mut rng);
                let truth = oracle_energy(&oracle, &t)?;
                label(&mut t.root, &truth);
                trees.push(t);
            }
        }
    }
    Ok(SyntheticDataset { trees, oracle })
}

fn label(n: &mut Node, truth: &PredictionMap) {
    n.ground_truth_energy = truth.get(&n.name).copied();
    for c in &mut n.children {
        label(c, truth);
    }
}

fn draw_oracle(spec: &SyntheticSpec) -> OracleParams {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(u64::MAX);

    let families: BTreeSet<Family> = spec.models.iter().map(|m| m.family).collect();
    let prims: BTreeSet<&str> = families.iter().flat_map(|f| f.primitives().iter().copied()).collect();
    let types: BTreeSet<&str> = families.iter().flat_map(|f| f.module_types().iter().copied()).collect();

    let mut leaf = BTreeMap::new();
    for p in prims {
        let mut w = vec![0.0; 12];
        match spec.leaf_model {
            LeafEnergyModel::Mixed => {
                w[2] = rng.random_range(1.0e-6..3.0e-6); // flops
                w[3] = rng.random_range(1.0e-5..3.0e-5); // mem_bytes
                w[4] = rng.random_range(0.5e-5..1.5e-5); // cpu_util
                w[8] = rng.random_range(0.5e-7..1.5e-7); // g_clk
                w[10] = rng.random_range(30.0..70.0); // latency (host power, W)
                w[11] = rng.random_range(0.9..1.3); // gpu_energy
            }
            LeafEnergyModel::FlopsAndGpuUtil => {
                w[2] = rng.random_range(2.0e-5..4.0e-5);
                w[6] = rng.random_range(2.0e-4..4.0e-4);
            }
        }
        let bias = rng.random_range(1.0e-4..3.0e-4);
        leaf.insert(p.to_string(), LeafOracle { weights: w, bias });
    }

    let (lo, hi) = spec.module_bias_range;
    let module_bias = types
        .into_iter()
        .map(|t| {
            let beta = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            (t.to_string(), beta)
        })
        .collect();
    OracleParams { leaf, module_bias, leaf_curvature: spec.leaf_curvature }
}

/// Architectural skeleton before features are attached.
enum Blueprint {
    Leaf { prim: &'static str, flops: f64, mem: f64, eff: f64 },
    Module { ty: &'static str, children: Vec<Blueprint> },
}

fn module(ty: &'static str, children: Vec<Blueprint>) -> Blueprint {
    Blueprint::Module { ty, children }
}

struct Shape {
    b: f64,
    s: f64,
    h: f64,
}

impl Shape {
    fn tokens(&self) -> f64 {
        self.b * self.s
    }
    fn heads(&self) -> f64 {
        self.h / 64.0
    }

    fn dense(&self, prim: &'static str, d_in: f64, d_out: f64, tokens: f64) -> Blueprint {
        Blueprint::Leaf {
            prim,
            flops: 2.0 * tokens * d_in * d_out / 1e6,
            mem: 4.0 * (d_in * d_out + tokens * (d_in + d_out)) / MIB,
            eff: 0.6,
        }
    }
    fn linear(&self, d_in: f64, d_out: f64) -> Blueprint {
        self.dense("Linear", d_in, d_out, self.tokens())
    }
    fn conv1d(&self, d_in: f64, d_out: f64) -> Blueprint {
        self.dense("Conv1D", d_in, d_out, self.tokens())
    }
    fn matmul(&self) -> Blueprint {
        Blueprint::Leaf {
            prim: "MatMul",
            flops: 2.0 * self.b * self.s * self.s * self.h / 1e6,
            mem: 4.0 * (2.0 * self.tokens() * self.h + self.b * self.heads() * self.s * self.s) / MIB,
            eff: 0.45,
        }
    }
    fn softmax(&self) -> Blueprint {
        let n = self.b * self.heads() * self.s * self.s;
        Blueprint::Leaf { prim: "Softmax", flops: 5.0 * n / 1e6, mem: 8.0 * n / MIB, eff: 0.1 }
    }
    fn layer_norm(&self) -> Blueprint {
        let n = self.tokens() * self.h;
        Blueprint::Leaf { prim: "LayerNorm", flops: 8.0 * n / 1e6, mem: (8.0 * n + 8.0 * self.h) / MIB, eff: 0.1 }
    }
    fn embedding(&self, rows: f64) -> Blueprint {
        let n = self.tokens() * self.h;
        Blueprint::Leaf { prim: "Embedding", flops: n / 1e6, mem: 4.0 * (n + rows * self.h.min(rows)) / MIB, eff: 0.05 }
    }
    fn pointwise(&self, prim: &'static str, n: f64, cost: f64) -> Blueprint {
        Blueprint::Leaf { prim, flops: cost * n / 1e6, mem: 8.0 * n / MIB, eff: 0.08 }
    }

    fn attention_core(&self) -> [Blueprint; 3] {
        [self.matmul(), self.softmax(), self.matmul()]
    }
}

fn blueprint(m: &ModelSpec, b: u32, s: u32) -> Blueprint {
    let sh = Shape { b: f64::from(b), s: f64::from(s), h: m.hidden as f64 };
    let h = sh.h;
    match m.family {
        Family::BertLike => {
            let layers = (0..m.n_layers)
                .map(|_| {
                    let [qk, sm, av] = sh.attention_core();
                    module(
                        "BertLayer",
                        vec![
                            module(
                                "BertAttention",
                                vec![
                                    module(
                                        "BertSelfAttention",
                                        vec![sh.linear(h, h), sh.linear(h, h), sh.linear(h, h), qk, sm, av],
                                    ),
                                    module("BertSelfOutput", vec![sh.linear(h, h), sh.layer_norm()]),
                                ],
                            ),
                            module("BertIntermediate", vec![sh.linear(h, 4.0 * h)]),
                            module("BertOutput", vec![sh.linear(4.0 * h, h), sh.layer_norm()]),
                        ],
                    )
                })
                .collect();
            module(
                "BertModel",
                vec![
                    module(
                        "BertEmbeddings",
                        vec![sh.embedding(30522.0), sh.embedding(512.0), sh.embedding(2.0), sh.layer_norm()],
                    ),
                    module("BertEncoder", layers),
                    module("BertPooler", vec![sh.dense("Linear", h, h, sh.b), sh.pointwise("Tanh", sh.b * h, 4.0)]),
                ],
            )
        }
        Family::DistilLike => {
            let blocks = (0..m.n_layers)
                .map(|_| {
                    let [qk, sm, av] = sh.attention_core();
                    module(
                        "TransformerBlock",
                        vec![
                            module(
                                "MultiHeadSelfAttention",
                                vec![sh.linear(h, h), sh.linear(h, h), sh.linear(h, h), qk, sm, av, sh.linear(h, h)],
                            ),
                            sh.layer_norm(),
                            module("FFN", vec![sh.linear(h, 4.0 * h), sh.linear(4.0 * h, h)]),
                            sh.layer_norm(),
                        ],
                    )
                })
                .collect();
            module(
                "DistilBertModel",
                vec![
                    module("Embeddings", vec![sh.embedding(30522.0), sh.embedding(512.0), sh.layer_norm()]),
                    module("Transformer", blocks),
                ],
            )
        }
        Family::GptLike => {
            let mut children = vec![sh.embedding(50257.0), sh.embedding(1024.0)];
            for _ in 0..m.n_layers {
                let [qk, sm, av] = sh.attention_core();
                children.push(module(
                    "GPT2Block",
                    vec![
                        sh.layer_norm(),
                        module("GPT2Attention", vec![sh.conv1d(h, 3.0 * h), qk, sm, av, sh.conv1d(h, h)]),
                        sh.layer_norm(),
                        module(
                            "GPT2MLP",
                            vec![sh.conv1d(h, 4.0 * h), sh.pointwise("GELU", sh.tokens() * 4.0 * h, 10.0), sh.conv1d(4.0 * h, h)],
                        ),
                    ],
                ));
            }
            children.push(sh.layer_norm());
            module("GPT2Model", children)
        }
    }
}

struct Builder<'a> {
    oracle: &'a OracleParams,
    noise: f64,
    b: f64,
    s: f64,
    model_mib: f64,
    counters: BTreeMap<&'static str, usize>,
}

impl Builder<'_> {
    fn next_name(&mut self, ty: &'static str) -> String {
        let c = self.counters.entry(ty).or_insert(0);
        let name = format!("{ty}:{c}");
        *c += 1;
        name
    }

    fn jitter(&self, rng: &mut ChaCha8Rng, v: f64) -> f64 {
        if self.noise == 0.0 {
            v
        } else {
            v * (1.0 + rng.random_range(-self.noise..=self.noise))
        }
    }

    fn cpu_util(&self, parent: Option<&str>) -> f64 {
        let beta = parent.map_or(1.0, |p| self.oracle.bias_of(p));
        50.0 + CPU_SIGNAL_SCALE * (DEFAULT_TAU * (beta - 1.0)).clamp(-0.995, 0.995).atanh()
    }

    /// Noise-free features of a leaf.
    fn leaf_features(&self, flops: f64, mem: f64, eff: f64, parent: &str) -> FeatureVector {
        let compute = flops / (PEAK_MFLOPS_PER_S * eff);
        let memory = mem / BANDWIDTH_MIB_PER_S;
        let latency = compute.max(memory) + LAUNCH_S;
        let gpu_util = 15.0 + 80.0 * (1.0 - LAUNCH_S / latency);
        let resident = self.model_mib + mem;
        let gm_usg = 8.0 + 60.0 * resident / (resident + 2000.0);
        FeatureVector {
            batch_size: self.b,
            seq_len: self.s,
            flops,
            mem_bytes: mem,
            cpu_util: self.cpu_util(Some(parent)),
            mem_usg: 22.0 + 3.0 * self.b * self.s / 8192.0,
            gpu_util,
            gm_usg,
            g_clk: 1350.0 + 4.5 * gpu_util,
            gm_clk: 6800.0 - 2.0 * gm_usg,
            latency,
            gpu_energy: 0.8 * latency * (60.0 + 1.9 * gpu_util),
        }
    }

    fn noisy(&self, rng: &mut ChaCha8Rng, f: FeatureVector) -> FeatureVector {
        let mut v = f.to_array();
        for x in v.iter_mut().skip(2) {
            *x = self.jitter(rng, *x);
        }
        FeatureVector::from_array(v)
    }

    fn build(&mut self, bp: &Blueprint, parent: Option<&'static str>, rng: &mut ChaCha8Rng) -> Node {
        match bp {
            Blueprint::Leaf { prim, flops, mem, eff } => {
                let name = self.next_name(prim);
                let f = self.leaf_features(*flops, *mem, *eff, parent.unwrap_or_default());
                Node::leaf(name, *prim, self.noisy(rng, f))
            }
            Blueprint::Module { ty, children } => {
                let name = self.next_name(ty);
                let kids: Vec<Node> = children.iter().map(|c| self.build(c, Some(ty), rng)).collect();
                let f = self.aggregate(&kids, parent);
                let kind = if parent.is_none() { NodeKind::Model } else { NodeKind::Module };
                Node::internal(name, kind, self.noisy(rng, f), kids)
            }
        }
    }

    /// Extensive features add up; intensive ones are latency-weighted means.
    fn aggregate(&self, kids: &[Node], parent: Option<&str>) -> FeatureVector {
        let lat: f64 = kids.iter().map(|k| k.features.latency).sum();
        let wmean = |get: fn(&FeatureVector) -> f64| {
            kids.iter().map(|k| get(&k.features) * k.features.latency).sum::<f64>() / lat
        };
        FeatureVector {
            batch_size: self.b,
            seq_len: self.s,
            flops: kids.iter().map(|k| k.features.flops).sum(),
            mem_bytes: kids.iter().map(|k| k.features.mem_bytes).sum(),
            cpu_util: self.cpu_util(parent),
            mem_usg: wmean(|f| f.mem_usg),
            gpu_util: wmean(|f| f.gpu_util),
            gm_usg: wmean(|f| f.gm_usg),
            g_clk: wmean(|f| f.g_clk),
            gm_clk: wmean(|f| f.gm_clk),
            latency: lat,
            gpu_energy: kids.iter().map(|k| k.features.gpu_energy).sum(),
        }
    }
}

fn build_tree(m: &ModelSpec, b: u32, s: u32, oracle: &OracleParams, noise: f64, rng: &mut ChaCha8Rng) -> ModelTree {
    let h = m.hidden as f64;
    // parameter footprint of the encoder stack, MiB
    let model_mib = 4.0 * 12.0 * h * h * m.n_layers as f64 / MIB;
    let mut builder = Builder {
        oracle,
        noise,
        b: f64::from(b),
        s: f64::from(s),
        model_mib,
        counters: BTreeMap::new(),
    };
    let mut root = builder.build(&blueprint(m, b, s), None, rng);
    root.name = m.family.root_type().to_string();
    ModelTree { model_name: m.name.clone(), batch_size: b, seq_len: s, root }
}

/// A single-process utilization trace for `tree`, derived from its root
/// features, for exercising the baseline estimator on synthetic data.
pub fn synthetic_trace(tree: &ModelTree) -> ResourceTrace {
    let f = &tree.root.features;
    ResourceTrace {
        samples: vec![TraceSample {
            process: "python".into(),
            p_dram: (f.mem_usg / 100.0).clamp(0.0, 1.0),
            p_cpu: (f.cpu_util / 100.0 * 0.25).clamp(0.0, 1.0),
            p_gpu: (f.gpu_util / 100.0).clamp(0.0, 1.0),
            e_dram: 6.0 * f.latency,
            e_cpu: 65.0 * f.latency,
            e_gpu: f.gpu_energy / 0.8,
        }],
    }
}
