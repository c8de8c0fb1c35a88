//! Node features, the model/resource split, and z-score normalization.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Canonical feature order. Weight vectors are always indexed in this order,
/// restricted to the active subset.
pub const FEATURE_NAMES: [&str; 12] = [
    "batch_size",
    "seq_len",
    "flops",
    "mem_bytes",
    "cpu_util",
    "mem_usg",
    "gpu_util",
    "gm_usg",
    "g_clk",
    "gm_clk",
    "latency",
    "gpu_energy",
];

/// Number of hardware-independent features at the front of [`FEATURE_NAMES`].
pub const MODEL_FEATURE_COUNT: usize = 4;

/// The twelve per-node features.
///
/// Units: `flops` in millions, `mem_bytes` in MiB, utilizations in percent,
/// clocks in MHz, `latency` in seconds and `gpu_energy` in joules.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureVector {
    pub batch_size: f64,
    pub seq_len: f64,
    pub flops: f64,
    pub mem_bytes: f64,
    pub cpu_util: f64,
    pub mem_usg: f64,
    pub gpu_util: f64,
    pub gm_usg: f64,
    pub g_clk: f64,
    pub gm_clk: f64,
    pub latency: f64,
    pub gpu_energy: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; 12] {
        [
            self.batch_size,
            self.seq_len,
            self.flops,
            self.mem_bytes,
            self.cpu_util,
            self.mem_usg,
            self.gpu_util,
            self.gm_usg,
            self.g_clk,
            self.gm_clk,
            self.latency,
            self.gpu_energy,
        ]
    }

    pub fn from_array(v: [f64; 12]) -> Self {
        Self {
            batch_size: v[0],
            seq_len: v[1],
            flops: v[2],
            mem_bytes: v[3],
            cpu_util: v[4],
            mem_usg: v[5],
            gpu_util: v[6],
            gm_usg: v[7],
            g_clk: v[8],
            gm_clk: v[9],
            latency: v[10],
            gpu_energy: v[11],
        }
    }

    pub fn get(&self, index: usize) -> f64 {
        self.to_array()[index]
    }

    /// Range violations, one message per offending field.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in FEATURE_NAMES.iter().zip(self.to_array()) {
            if !v.is_finite() {
                out.push(format!("feature `{name}` is not finite ({v})"));
            }
        }
        if !out.is_empty() {
            return out;
        }
        if self.batch_size < 1.0 {
            out.push(format!("batch_size must be >= 1, got {}", self.batch_size));
        }
        if self.seq_len < 1.0 {
            out.push(format!("seq_len must be >= 1, got {}", self.seq_len));
        }
        for (name, v) in [
            ("cpu_util", self.cpu_util),
            ("mem_usg", self.mem_usg),
            ("gpu_util", self.gpu_util),
            ("gm_usg", self.gm_usg),
        ] {
            if !(0.0..=100.0).contains(&v) {
                out.push(format!("{name} must be a percentage in [0, 100], got {v}"));
            }
        }
        for (name, v) in [
            ("flops", self.flops),
            ("mem_bytes", self.mem_bytes),
            ("g_clk", self.g_clk),
            ("gm_clk", self.gm_clk),
            ("latency", self.latency),
            ("gpu_energy", self.gpu_energy),
        ] {
            if v < 0.0 {
                out.push(format!("{name} must be non-negative, got {v}"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubset {
    All,
    ModelOnly,
    ResourceOnly,
}

impl FeatureSubset {
    pub const ALL: [FeatureSubset; 3] = [Self::All, Self::ModelOnly, Self::ResourceOnly];

    /// Indices into [`FEATURE_NAMES`], in canonical order.
    pub fn indices(self) -> std::ops::Range<usize> {
        match self {
            Self::All => 0..FEATURE_NAMES.len(),
            Self::ModelOnly => 0..MODEL_FEATURE_COUNT,
            Self::ResourceOnly => MODEL_FEATURE_COUNT..FEATURE_NAMES.len(),
        }
    }

    pub fn len(self) -> usize {
        self.indices().len()
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    pub fn names(self) -> &'static [&'static str] {
        &FEATURE_NAMES[self.indices()]
    }

    pub fn select(self, f: &FeatureVector) -> Vec<f64> {
        f.to_array()[self.indices()].to_vec()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::All => "all",
            Self::ModelOnly => "model_only",
            Self::ResourceOnly => "resource_only",
        }
    }
}

impl fmt::Display for FeatureSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSubset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Self::All),
            "model_only" | "model-only" | "model" => Ok(Self::ModelOnly),
            "resource_only" | "resource-only" | "resource" => Ok(Self::ResourceOnly),
            other => Err(Error::InvalidInput(format!("unknown feature subset `{other}`"))),
        }
    }
}

/// Per-feature z-score statistics fitted on a training set.
///
/// Standard deviations are population deviations; a zero-variance feature is
/// stored with std 1 so it normalizes to a constant 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub subset: FeatureSubset,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit<'a, I>(features: I, subset: FeatureSubset) -> Result<Self>
    where
        I: IntoIterator<Item = &'a FeatureVector>,
    {
        let dim = subset.len();
        let mut sum = vec![0.0; dim];
        let mut rows = Vec::new();
        for f in features {
            let row = subset.select(f);
            for (s, v) in sum.iter_mut().zip(&row) {
                *s += v;
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Empty("normalizer training set"));
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let mut var = vec![0.0; dim];
        for row in &rows {
            for ((acc, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .zip(&mean)
            .map(|(v, m)| {
                let s = (v / n).sqrt();
                // Relative cutoff so rounding noise on a constant column is not amplified.
                if s <= 1e-12 * m.abs().max(1.0) {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { subset, mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, f: &FeatureVector) -> Vec<f64> {
        self.subset
            .select(f)
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}
