//! Fine-tuning-set size sweep: rerun the experiment at nested fractions of
//! the fine-tuning pool.

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::experiment::run_experiment;
use crate::harness::report::{write_atomic, ReportBody, ReportMeta};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepBody {
    pub config_hash: String,
    pub fractions: Vec<f64>,
    /// One report body per fraction, same order as `fractions`.
    pub runs: Vec<ReportBody>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub meta: ReportMeta,
    pub body: SweepBody,
}

impl SweepReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn content_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.body)?)
    }
}

/// Run the experiment once per fraction. Subsampling is seeded and nested:
/// the pool at a smaller fraction is a subset of the pool at a larger one.
pub fn sweep_finetune_size(config: &ExperimentConfig, fractions: &[f64]) -> Result<SweepReport> {
    if fractions.is_empty() {
        return Err(Error::config("fractions", "must be nonempty"));
    }
    for pair in fractions.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::config("fractions", "must be strictly ascending"));
        }
    }
    if fractions.iter().any(|f| !(f > &0.0 && f <= &1.0)) {
        return Err(Error::config("fractions", "must lie in (0, 1]"));
    }
    config.validate()?;

    let mut runs = Vec::with_capacity(fractions.len());
    let mut metas = Vec::new();
    for &fraction in fractions {
        let mut sub = config.clone();
        sub.finetune_fraction = fraction;
        sub.output_dir = config.output_dir.join(format!("fraction_{fraction}"));
        let report = run_experiment(&sub)?;
        metas.push(report.meta);
        runs.push(report.body);
    }

    let report = SweepReport {
        meta: ReportMeta {
            created_unix_ms: metas.first().map(|m| m.created_unix_ms).unwrap_or(0),
            cell_wall_clock_ms: metas
                .iter()
                .flat_map(|m| m.cell_wall_clock_ms.iter().copied())
                .collect(),
            adaptation_wall_clock_ms: metas
                .into_iter()
                .flat_map(|m| m.adaptation_wall_clock_ms)
                .collect(),
        },
        body: SweepBody {
            config_hash: config.hash(),
            fractions: fractions.to_vec(),
            runs,
        },
    };
    write_atomic(
        &config.output_dir.join("sweep.json"),
        report.to_json()?.as_bytes(),
    )?;
    write_sweep_csv(&report, config)?;
    Ok(report)
}

fn write_sweep_csv(report: &SweepReport, config: &ExperimentConfig) -> Result<()> {
    let mut rows: Vec<u8> = Vec::new();
    {
        let mut writer = csv::Writer::from_writer(&mut rows);
        writer.write_record([
            "fraction",
            "strategy",
            "horizon",
            "protocol",
            "seed",
            "aggregate_cv_rmse",
            "improvement_vs_pretrained",
            "failed",
        ])?;
        for (fraction, body) in report.body.fractions.iter().zip(&report.body.runs) {
            for c in &body.cells {
                writer.write_record([
                    format!("{fraction}"),
                    c.strategy.to_string(),
                    c.horizon.to_string(),
                    c.protocol.to_string(),
                    c.seed.to_string(),
                    c.aggregate_cv_rmse.map(|v| format!("{v}")).unwrap_or_default(),
                    c.improvement_vs_pretrained
                        .map(|v| format!("{v}"))
                        .unwrap_or_default(),
                    c.failed.clone().unwrap_or_default(),
                ])?;
            }
        }
        writer.flush()?;
    }
    write_atomic(&config.output_dir.join("sweep.csv"), &rows)
}

/// Convenience for directional checks: the full run report of one fraction.
pub fn fraction_report(sweep: &SweepReport, fraction: f64) -> Option<&ReportBody> {
    sweep
        .body
        .fractions
        .iter()
        .position(|f| (*f - fraction).abs() < 1e-12)
        .map(|i| &sweep.body.runs[i])
}
