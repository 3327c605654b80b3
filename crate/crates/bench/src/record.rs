//! Flat run records and their CSV form.

use std::fs::OpenOptions;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// One solve. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub env: String,
    #[serde(rename = "T")]
    pub horizon: usize,
    /// Per-agent `|Z^i|`, joined with `x` (e.g. `2x2`).
    pub z_sizes: String,
    pub lambda0: f64,
    pub alpha: f64,
    pub anneal_sweeps: usize,
    pub seed: u64,
    pub ablation: String,
    pub sweeps: usize,
    #[serde(rename = "J_exact", with = "full_precision")]
    pub j_exact: f64,
    #[serde(rename = "J_risk_final", with = "full_precision")]
    pub j_risk_final: f64,
    pub wall_time_ms: f64,
    pub peak_floats: usize,
    pub init_obs_mode: String,
}

pub const COLUMNS: [&str; 14] = [
    "env",
    "T",
    "z_sizes",
    "lambda0",
    "alpha",
    "anneal_sweeps",
    "seed",
    "ablation",
    "sweeps",
    "J_exact",
    "J_risk_final",
    "wall_time_ms",
    "peak_floats",
    "init_obs_mode",
];

mod full_precision {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:.16e}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let text = String::deserialize(d)?;
        text.trim().parse().map_err(serde::de::Error::custom)
    }
}

pub fn z_sizes_label(sizes: &[usize]) -> String {
    sizes.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

impl RunRecord {
    /// Same record with the wall-clock column zeroed, for determinism checks.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_time_ms: 0.0,
            ..self.clone()
        }
    }
}

/// Appends `records` to `path`, writing the header when the file is new or empty.
pub fn write_runs(path: &Path, records: &[RunRecord]) -> io::Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut writer = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    if fresh && records.is_empty() {
        writer.write_record(COLUMNS)?;
    }
    for r in records {
        writer.serialize(r).map_err(io::Error::other)?;
    }
    writer.flush()
}

pub fn read_runs(path: &Path) -> Result<Vec<RunRecord>, csv::Error> {
    let mut reader = csv::Reader::from_path(path)?;
    reader.deserialize().collect()
}

pub fn parse_runs(text: &str) -> Result<Vec<RunRecord>, csv::Error> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader.deserialize().collect()
}
