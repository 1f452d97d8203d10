//! CSV formatting, atomic file output and run manifests.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cera_core::simulator::{AggregateStats, Estimate};
use serde::{Deserialize, Serialize};

/// Writes `contents` to `dir/name` via a temporary file and rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(&path).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn fixed(x: f64) -> String {
    format!("{x:.6}")
}

fn optional(x: Option<f64>) -> String {
    x.map(fixed).unwrap_or_default()
}

/// `n,efficiency` curve.
pub fn curve_csv(curve: &[(u64, f64)]) -> String {
    let mut out = String::from("n,efficiency\n");
    for (n, e) in curve {
        writeln!(out, "{n},{}", fixed(*e)).unwrap();
    }
    out
}

pub const SIMULATION_HEADER: &str = "n,mean_singles,mean_perceived,mean_phantoms,efficiency,se_efficiency,\
se_singles,se_perceived,se_phantoms,efficiency_mean_of_ratios,se_efficiency_mean_of_ratios";

/// One simulation row; standard errors are empty when undefined.
pub fn simulation_row(n: u64, stats: &AggregateStats) -> String {
    let Estimate { mean: eff, std_error: eff_se } = stats.efficiency;
    format!(
        "{n},{},{},{},{},{},{},{},{},{},{}",
        fixed(stats.singles.mean),
        fixed(stats.perceived.mean),
        fixed(stats.phantoms.mean),
        fixed(eff),
        optional(eff_se),
        optional(stats.singles.std_error),
        optional(stats.perceived.std_error),
        optional(stats.phantoms.std_error),
        fixed(stats.efficiency_mean_of_ratios.mean),
        optional(stats.efficiency_mean_of_ratios.std_error),
    )
}

/// Record of one run, sufficient to reproduce its CSV output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Command-line arguments (without `--out`) that reproduce the run.
    pub args: Vec<String>,
    pub parameters: serde_json::Value,
    pub master_seed: Option<u64>,
    pub version: String,
    pub outputs: Vec<String>,
    pub duration_ms: f64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}
