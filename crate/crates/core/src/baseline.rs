//! Utilization-based software energy estimate used as the comparison baseline:
//! `e = PUE · Σ_p (p_dram·e_dram + p_cpu·e_cpu + p_gpu·e_gpu)`.

use serde::{Deserialize, Serialize};
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// One row of a resource trace: the share of each resource attributable to a
/// process and the energy of that resource over the sample window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub process: String,
    pub p_dram: f64,
    pub p_cpu: f64,
    pub p_gpu: f64,
    pub e_dram: f64,
    pub e_cpu: f64,
    pub e_gpu: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResourceTrace {
    pub samples: Vec<TraceSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub pue: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { pue: 1.0 }
    }
}

impl ResourceTrace {
    pub fn from_csv_reader<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let samples = rdr.deserialize().collect::<std::result::Result<Vec<TraceSample>, _>>()?;
        Ok(Self { samples })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for s in &self.samples {
            w.serialize(s)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn utilization_energy(trace: &ResourceTrace, cfg: &BaselineConfig) -> Result<f64> {
    if !(cfg.pue >= 1.0) {
        return Err(Error::InvalidInput(format!("PUE must be >= 1, got {}", cfg.pue)));
    }
    let mut total = 0.0;
    for s in &trace.samples {
        for (name, p) in [("p_dram", s.p_dram), ("p_cpu", s.p_cpu), ("p_gpu", s.p_gpu)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!("{name} = {p} for process `{}` is outside [0, 1]", s.process)));
            }
        }
        for (name, e) in [("e_dram", s.e_dram), ("e_cpu", s.e_cpu), ("e_gpu", s.e_gpu)] {
            if !(e >= 0.0) {
                return Err(Error::InvalidInput(format!("{name} = {e} for process `{}` is negative", s.process)));
            }
        }
        total += s.p_dram * s.e_dram + s.p_cpu * s.e_cpu + s.p_gpu * s.e_gpu;
    }
    Ok(cfg.pue * total)
}
