//! Zero-shot and few-shot evaluation with the CV-RMSE metric.

use crate::error::{Error, Result};
use crate::forecaster::{cv_rmse, finetune, FinetuneOptions, Forecaster};
use crate::series::WindowSample;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Deployability threshold on mean CV-RMSE.
pub const ASHRAE_CV_RMSE_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    /// Evaluate the model as-is on every test window.
    ZeroShot,
    /// Fine-tune on the chronologically earliest fraction of the target's
    /// windows, then evaluate on the rest.
    FewShot,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Protocol::ZeroShot => write!(f, "zero_shot"),
            Protocol::FewShot => write!(f, "few_shot"),
        }
    }
}

/// Few-shot settings: the training fraction and the fine-tuning run applied
/// to it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FewShotOptions {
    pub fraction: f64,
    pub finetune: FinetuneOptions,
}

impl Default for FewShotOptions {
    fn default() -> Self {
        FewShotOptions {
            fraction: 0.1,
            finetune: FinetuneOptions {
                steps: 200,
                ..FinetuneOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleScore {
    pub sample_id: String,
    pub cv_rmse: f64,
}

/// Per-sample scores plus the aggregate for one protocol run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_sample: Vec<SampleScore>,
    /// Arithmetic mean of the per-sample scores.
    pub aggregate: f64,
    pub horizon: usize,
    pub protocol: Protocol,
    pub ashrae_pass: bool,
    /// Windows skipped because their target mean is zero.
    pub excluded_zero_mean: usize,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per evaluated sample.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path.as_ref())?;
        writer.write_record(["sample_id", "cv_rmse"])?;
        for s in &self.per_sample {
            writer.write_record([s.sample_id.as_str(), &format!("{}", s.cv_rmse)])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Dispatch on the protocol. Zero-shot ignores `few_shot`.
pub fn evaluate(
    model: &Forecaster,
    test_windows: &[WindowSample],
    protocol: Protocol,
    few_shot: &FewShotOptions,
) -> Result<EvalReport> {
    match protocol {
        Protocol::ZeroShot => evaluate_zero_shot(model, test_windows),
        Protocol::FewShot => evaluate_few_shot(model, test_windows, few_shot),
    }
}

/// Evaluate the model as-is; the model is never mutated.
pub fn evaluate_zero_shot(model: &Forecaster, test_windows: &[WindowSample]) -> Result<EvalReport> {
    score_windows(model, test_windows, Protocol::ZeroShot)
}

/// Chronological few-shot: the earliest `fraction` of windows (at least one,
/// strictly before the rest) fine-tunes a thawed copy; the remainder is the
/// test set.
pub fn evaluate_few_shot(
    model: &Forecaster,
    windows: &[WindowSample],
    opts: &FewShotOptions,
) -> Result<EvalReport> {
    if !(opts.fraction > 0.0 && opts.fraction < 1.0) {
        return Err(Error::invalid("fraction", "must be in (0, 1)"));
    }
    if windows.len() < 2 {
        return Err(Error::EmptyInput {
            what: "few-shot windows (need at least 2 to split)".into(),
        });
    }
    let mut ordered: Vec<&WindowSample> = windows.iter().collect();
    ordered.sort_by(|a, b| (&a.series_id, a.t0).cmp(&(&b.series_id, b.t0)));
    let n_train = ((windows.len() as f64 * opts.fraction).floor() as usize)
        .max(1)
        .min(windows.len() - 1);
    // Fine-tuning happens at the model's native output length; evaluation
    // windows cut at a longer horizon are truncated for the train split.
    let native = model.trainable_horizon();
    let train: Vec<WindowSample> = ordered[..n_train]
        .iter()
        .map(|w| {
            let mut t = (*w).clone();
            if t.y.len() < native {
                return Err(Error::invalid(
                    "few-shot windows",
                    format!(
                        "targets of length {} are shorter than the trainable horizon {}",
                        t.y.len(),
                        native
                    ),
                ));
            }
            t.y.truncate(native);
            Ok(t)
        })
        .collect::<Result<_>>()?;
    let test: Vec<WindowSample> = ordered[n_train..].iter().map(|w| (*w).clone()).collect();

    let adapted = finetune(&model.thaw_copy(), &train, &opts.finetune)?;
    let mut report = score_windows(&adapted, &test, Protocol::FewShot)?;
    report.protocol = Protocol::FewShot;
    Ok(report)
}

fn score_windows(
    model: &Forecaster,
    windows: &[WindowSample],
    protocol: Protocol,
) -> Result<EvalReport> {
    if windows.is_empty() {
        return Err(Error::EmptyInput {
            what: "test windows".into(),
        });
    }
    let mut per_sample = Vec::with_capacity(windows.len());
    let mut excluded = 0usize;
    for w in windows {
        if w.x.len() != model.lookback() || w.y.len() != model.horizon() {
            return Err(Error::shape(
                "evaluate",
                format!("window ({}, {})", model.lookback(), model.horizon()),
                format!("({}, {})", w.x.len(), w.y.len()),
            ));
        }
        let pred = model.predict(&w.x)?;
        match cv_rmse(&w.y, &pred) {
            Ok(score) => per_sample.push(SampleScore {
                sample_id: w.sample_id(),
                cv_rmse: score,
            }),
            Err(Error::ZeroMeanTarget) => excluded += 1,
            Err(e) => return Err(e),
        }
    }
    if per_sample.is_empty() {
        return Err(Error::EmptyInput {
            what: "evaluable test windows (all targets had zero mean)".into(),
        });
    }
    let aggregate = per_sample.iter().map(|s| s.cv_rmse).sum::<f64>() / per_sample.len() as f64;
    Ok(EvalReport {
        aggregate,
        horizon: model.horizon(),
        protocol,
        ashrae_pass: aggregate < ASHRAE_CV_RMSE_THRESHOLD,
        excluded_zero_mean: excluded,
        per_sample,
    })
}
