use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use super::ExperimentReport;
use crate::error::{Error, Result};
use crate::selection::PolicyKind;

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub policy: PolicyKind,
    pub path: usize,
    pub step: usize,
    pub entropy_bits: f64,
    pub entropy_se: f64,
    pub misclass: f64,
    pub misclass_se: f64,
    /// `phi(u_hat; P)` of the question asked to reach this step; 0 at step 0.
    pub phi_bits: f64,
    pub decision_ms: f64,
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::invalid("output path has no file name"))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(|e| Error::io(path, e))
}

/// `metrics.csv` and `summary.json` under `dir`, which is created if needed.
pub fn write_outputs(dir: &Path, report: &ExperimentReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in &report.trajectories {
        for row in &t.rows {
            w.serialize(row).map_err(|e| Error::invalid(format!("csv: {e}")))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
    write_atomic(&dir.join("metrics.csv"), &bytes)?;
    let mut json = serde_json::to_vec_pretty(report)?;
    json.push(b'\n');
    write_atomic(&dir.join("summary.json"), &json)
}
