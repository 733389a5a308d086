//! Run reports: deterministic content with timestamps and timings
//! segregated into a separate metadata field.

use crate::error::Result;
use crate::forecaster::Protocol;
use crate::harness::config::Strategy;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetResult {
    pub target_id: String,
    pub cv_rmse: f64,
    pub ashrae_pass: bool,
    pub excluded_zero_mean: usize,
    pub n_windows: usize,
}

/// One (strategy, horizon, protocol, seed) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub strategy: Strategy,
    pub horizon: usize,
    pub protocol: Protocol,
    pub seed: u64,
    /// Mean of the per-target aggregates; absent when the cell failed.
    pub aggregate_cv_rmse: Option<f64>,
    pub ashrae_pass: Option<bool>,
    /// `(pretrained - strategy) / pretrained` against the matching
    /// pretrained cell.
    pub improvement_vs_pretrained: Option<f64>,
    pub per_target: Vec<TargetResult>,
    pub failed: Option<String>,
}

/// Deterministic report content: rerunning the same config and seeds
/// reproduces these bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBody {
    pub config_hash: String,
    pub finetune_fraction: f64,
    pub cells: Vec<CellResult>,
}

/// Wall-clock data, kept apart so the content stays byte-comparable.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReportMeta {
    pub created_unix_ms: u64,
    /// Aligned with `body.cells`.
    pub cell_wall_clock_ms: Vec<u64>,
    /// Per (strategy, seed) adaptation timings.
    pub adaptation_wall_clock_ms: Vec<(String, u64, u64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub meta: ReportMeta,
    pub body: ReportBody,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The deterministic part only.
    pub fn content_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.body)?)
    }

    pub fn cell(
        &self,
        strategy: Strategy,
        horizon: usize,
        protocol: Protocol,
        seed: u64,
    ) -> Option<&CellResult> {
        self.body.cells.iter().find(|c| {
            c.strategy == strategy && c.horizon == horizon && c.protocol == protocol && c.seed == seed
        })
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_json()?.as_bytes())
    }

    /// One row per cell, plot-ready.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut rows: Vec<u8> = Vec::new();
        {
            let mut writer = csv::Writer::from_writer(&mut rows);
            writer.write_record([
                "strategy",
                "horizon",
                "protocol",
                "seed",
                "aggregate_cv_rmse",
                "ashrae_pass",
                "improvement_vs_pretrained",
                "failed",
            ])?;
            for c in &self.body.cells {
                writer.write_record([
                    c.strategy.to_string(),
                    c.horizon.to_string(),
                    c.protocol.to_string(),
                    c.seed.to_string(),
                    c.aggregate_cv_rmse.map(|v| format!("{v}")).unwrap_or_default(),
                    c.ashrae_pass.map(|v| v.to_string()).unwrap_or_default(),
                    c.improvement_vs_pretrained
                        .map(|v| format!("{v}"))
                        .unwrap_or_default(),
                    c.failed.clone().unwrap_or_default(),
                ])?;
            }
            writer.flush()?;
        }
        write_atomic(path.as_ref(), &rows)
    }

    /// All cells failed (worth a nonzero exit).
    pub fn all_failed(&self) -> bool {
        !self.body.cells.is_empty() && self.body.cells.iter().all(|c| c.failed.is_some())
    }
}

/// Write-temp-then-rename so readers never observe partial files.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> RunReport {
        RunReport {
            meta: ReportMeta {
                created_unix_ms: 123,
                cell_wall_clock_ms: vec![10],
                adaptation_wall_clock_ms: vec![("ft".into(), 1, 42)],
            },
            body: ReportBody {
                config_hash: "abc".into(),
                finetune_fraction: 1.0,
                cells: vec![CellResult {
                    strategy: Strategy::Ft,
                    horizon: 24,
                    protocol: Protocol::ZeroShot,
                    seed: 1,
                    aggregate_cv_rmse: Some(0.25),
                    ashrae_pass: Some(true),
                    improvement_vs_pretrained: Some(0.1),
                    per_target: vec![],
                    failed: None,
                }],
            },
        }
    }

    #[test]
    fn content_excludes_meta() {
        let mut a = sample_report();
        let mut b = sample_report();
        a.meta.created_unix_ms = 1;
        b.meta.created_unix_ms = 2;
        assert_eq!(a.content_json().unwrap(), b.content_json().unwrap());
        assert_ne!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn csv_has_one_row_per_cell() {
        let report = sample_report();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        report.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("ft,24,zero_shot,1,0.25,true,0.1,"));
    }

    #[test]
    fn atomic_write_leaves_no_tmp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.json");
        write_atomic(&path, b"{}").unwrap();
        assert!(path.exists());
        assert!(!path.with_extension("tmp").exists());
    }
}
